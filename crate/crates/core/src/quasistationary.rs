//! Inner-region quasi-stationary concentrations for an imposed moment
//! `M = M_{γ+λ}`, their large-size asymptotics and the escaping cluster flux.
//!
//! Recursions are carried out on `ln c_n`; the concentrations decay roughly like
//! `M^{-(2n-1)}` and leave the f64 range long before the sizes of interest.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::kernel::{KernelSpec, Side};
use crate::quadrature::{self, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsError {
    #[error("gamma + 2 lambda = {0} must exceed 1")]
    NotSupercritical(f64),
    #[error("gamma + 2 lambda = {0} is below 1, recursion needs gamma + 2 lambda >= 1")]
    Subcritical(f64),
    #[error("kernel is not on the critical line gamma + 2 lambda = 1 (got {0})")]
    NotCritical(f64),
    #[error("exponent p = {0} must exceed 1, the integral diverges otherwise")]
    Divergent(f64),
    #[error("moment M = {0} is out of range (needs {1})")]
    BadMoment(f64, &'static str),
    #[error("size index {0} is out of range")]
    BadSize(f64),
    #[error("recursion overflowed at n = {0}")]
    Overflow(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Positive root of `k11 c² + M c = 1`.
pub fn solve_c1(m_gl: f64, k11: f64) -> f64 {
    2.0 / (m_gl + (m_gl * m_gl + 4.0 * k11).sqrt())
}

/// Streaming log-sum-exp.
#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    fn add(&mut self, t: f64) {
        if t > self.max {
            self.sum = self.sum * (self.max - t).exp() + 1.0;
            self.max = t;
        } else {
            self.sum += (t - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// `ln Σ_{j<n} K(n-j, j) e^{v_{n-j} + v_j}` with `v` indexed from 1 (`v[0]` unused).
fn log_convolution(k: &KernelSpec, v: &[f64], n: usize) -> f64 {
    let mut acc = LogSum::new();
    let half = n / 2;
    let ln2 = std::f64::consts::LN_2;
    for j in 1..=half {
        let i = n - j;
        let t = k.rate(i as f64, j as f64).ln() + v[i] + v[j];
        if i == j {
            acc.add(t);
        } else {
            acc.add(t + ln2);
        }
    }
    acc.value()
}

fn check_recursion_kernel(k: &KernelSpec) -> Result<(), QsError> {
    if k.flags().tail_vs_one == Side::Below {
        return Err(QsError::Subcritical(k.tail_exponent()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct QsSolution {
    pub m_gl: f64,
    /// `ln c_n` at index `n - 1`.
    pub log_c: Vec<f64>,
    pub kernel: KernelSpec,
}

/// Quasi-stationary concentrations `c_1..c_{n_max}` by the exact recursion.
pub fn solve_recursion(k: &KernelSpec, m_gl: f64, n_max: usize) -> Result<QsSolution, QsError> {
    check_recursion_kernel(k)?;
    if !(m_gl.is_finite() && m_gl > 0.0) {
        return Err(QsError::BadMoment(m_gl, "finite and positive"));
    }
    if n_max < 2 {
        return Err(QsError::BadSize(n_max as f64));
    }
    let lambda = k.lambda();
    let c1 = solve_c1(m_gl, k.rate(1.0, 1.0));
    let mut v = vec![0.0; n_max + 1];
    v[1] = c1.ln();
    for n in 2..=n_max {
        let nf = n as f64;
        let gain = log_convolution(k, &v, n) - std::f64::consts::LN_2;
        let loss = k.rate(1.0, nf) * c1 + m_gl * nf.powf(-lambda);
        let value = gain - loss.ln();
        if !value.is_finite() {
            return Err(QsError::Overflow(n));
        }
        v[n] = value;
    }
    v.remove(0);
    Ok(QsSolution {
        m_gl,
        log_c: v,
        kernel: k.clone(),
    })
}

impl QsSolution {
    pub fn len(&self) -> usize {
        self.log_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_c.is_empty()
    }

    pub fn log_c(&self, n: usize) -> f64 {
        self.log_c[n - 1]
    }

    pub fn c(&self, n: usize) -> f64 {
        self.log_c[n - 1].exp()
    }

    /// `ln X_n` recovered from `c_n = X_n / M^{2n-1}`.
    pub fn log_x_view(&self, n: usize) -> f64 {
        self.log_c(n) + (2.0 * n as f64 - 1.0) * self.m_gl.ln()
    }

    /// Relative residual of the balance `c_n (K(1,n) c_1 + M n^{-λ}) = ½ Σ K c c`.
    pub fn residual(&self, n: usize) -> f64 {
        let k = &self.kernel;
        let nf = n as f64;
        let c1 = self.c(1);
        if n == 1 {
            let k11 = k.rate(1.0, 1.0);
            return (k11 * c1 * c1 + self.m_gl * c1 - 1.0).abs();
        }
        let mut v = vec![0.0];
        v.extend_from_slice(&self.log_c[..n]);
        let gain = log_convolution(k, &v, n) - std::f64::consts::LN_2;
        let loss = (k.rate(1.0, nf) * c1 + self.m_gl * nf.powf(-k.lambda())).ln() + v[n];
        (gain - loss).exp_m1().abs()
    }

    /// `max_n Σ_{j≥2} K(j,n) c_j / max{K(1,n) c_1, M n^{-λ}}` over the computed sizes.
    /// Small values mean the loss to small clusters is dominated as assumed by the recursion.
    pub fn loss_dominance_ratio(&self) -> f64 {
        let k = &self.kernel;
        let c1 = self.c(1);
        let nmax = self.len();
        let mut worst: f64 = 0.0;
        for n in 1..=nmax {
            let nf = n as f64;
            let mut acc = LogSum::new();
            for j in 2..=nmax {
                acc.add(k.rate(j as f64, nf).ln() + self.log_c(j));
            }
            let denom = (k.rate(1.0, nf) * c1).max(self.m_gl * nf.powf(-k.lambda()));
            worst = worst.max((acc.value() - denom.ln()).exp());
        }
        worst
    }
}

/// `ln X_n` for `X_n = (n^λ / 2) Σ_{j<n} K(n-j, j) X_{n-j} X_j`, `X_1 = 1`.
pub fn xn_sequence(k: &KernelSpec, n_max: usize) -> Result<Vec<f64>, QsError> {
    check_recursion_kernel(k)?;
    if n_max < 1 {
        return Err(QsError::BadSize(0.0));
    }
    let lambda = k.lambda();
    let mut v = vec![0.0; n_max + 1];
    for n in 2..=n_max {
        let nf = n as f64;
        v[n] = lambda * nf.ln() - std::f64::consts::LN_2 + log_convolution(k, &v, n);
    }
    v.remove(0);
    Ok(v)
}

const A_TAIL_CUTOFF: f64 = 1e-16;

/// `ln(1 + e^{x})` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Finds the first `u = u0 + k·step` (k ≥ 0) beyond which `g` stays below the cutoff.
fn tail_cutoff(g: impl Fn(f64) -> f64, u0: f64, step: f64) -> f64 {
    let mut u = u0;
    for _ in 0..100_000 {
        if g(u) < A_TAIL_CUTOFF && g(u + step) < A_TAIL_CUTOFF {
            return u;
        }
        u += step;
    }
    u
}

/// `A_p = ∫_0^∞ ln(1 + y^{-p}) dy`, finite for `p > 1`.
pub fn a_constant(p: f64) -> Result<f64, QsError> {
    if !(p.is_finite() && p > 1.0) {
        return Err(QsError::Divergent(p));
    }
    // y = e^u
    let g = |u: f64| softplus(-p * u) * u.exp();
    let lo = tail_cutoff(g, 0.0, -1.0);
    let hi = tail_cutoff(g, 0.0, 1.0);
    let left = quadrature::integrate(g, lo, 0.0, 1e-12, 1e-14)?;
    let right = quadrature::integrate(g, 0.0, hi, 1e-12, 1e-14)?;
    Ok(left.value + right.value)
}

/// `∫_0^z ln(1 + y^{-p}) dy`.
pub fn partial_a_integral(p: f64, z: f64) -> Result<f64, QsError> {
    if !(p.is_finite() && p > 1.0) {
        return Err(QsError::Divergent(p));
    }
    if !(z >= 0.0 && z.is_finite()) {
        return Err(QsError::BadSize(z));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let boundary = z * softplus(-p * z.ln());
    if z <= 2.0 {
        let body = quadrature::integrate(|y| p / (1.0 + y.powf(p)), 0.0, z, 1e-14, 1e-14)?;
        Ok(boundary + body.value)
    } else {
        // ∫_z^∞ p/(1+y^p) dy with y = z e^v
        let h = |v: f64| {
            let y = z * v.exp();
            p * y / (1.0 + y.powf(p))
        };
        let hi = tail_cutoff(|v| h(v) / p, 0.0, 1.0);
        let tail = quadrature::integrate(h, 0.0, hi, 1e-14, 1e-14)?;
        Ok(boundary + a_constant(p)? - tail.value)
    }
}

fn supercritical_exponent(k: &KernelSpec) -> Result<f64, QsError> {
    if k.flags().tail_vs_one != Side::Above {
        return Err(QsError::NotSupercritical(k.tail_exponent()));
    }
    Ok(k.tail_exponent())
}

/// Large-size asymptote of the quasi-stationary concentrations with the
/// undetermined constant set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Asymptote {
    pub value: f64,
    pub log_value: f64,
    pub constant: f64,
}

/// Evaluates the asymptotic formula for `c_n` at real size `n`.
pub fn cn_asymptote(k: &KernelSpec, m_gl: f64, n: f64) -> Result<Asymptote, QsError> {
    let p = supercritical_exponent(k)?;
    if !(m_gl.is_finite() && m_gl > 1.0) {
        return Err(QsError::BadMoment(m_gl, "M > 1"));
    }
    if !(n.is_finite() && n >= 1.0) {
        return Err(QsError::BadSize(n));
    }
    let g = k.gamma();
    let l = k.lambda();
    let s = m_gl.powf(2.0 / p);
    let ln_m = m_gl.ln();
    let ln_n = n.ln();
    let log_value = (g / 2.0 + l) * (2.0 * PI).ln() + 2.0 * ln_m
        - (g + l) * ln_n
        - 0.5 * softplus(2.0 * ln_m - p * ln_n)
        - s * partial_a_integral(p, n / s)?;
    Ok(Asymptote {
        value: log_value.exp(),
        log_value,
        constant: 1.0,
    })
}

/// Very-large-size limit of [`cn_asymptote`], where the integral saturates at `A_p`.
pub fn cn_far_asymptote(k: &KernelSpec, m_gl: f64, n: f64) -> Result<Asymptote, QsError> {
    let p = supercritical_exponent(k)?;
    let g = k.gamma();
    let l = k.lambda();
    let log_value = (g / 2.0 + l) * (2.0 * PI).ln() + 2.0 * m_gl.ln()
        - (g + l) * n.ln()
        - m_gl.powf(2.0 / p) * a_constant(p)?;
    Ok(Asymptote {
        value: log_value.exp(),
        log_value,
        constant: 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Flux {
    pub value: f64,
    pub log_value: f64,
    pub constant: f64,
}

/// Rate at which clusters escape the inner region, `J_c(M)`, with the constant set to 1.
pub fn particle_flux(k: &KernelSpec, m_gl: f64) -> Result<Flux, QsError> {
    let p = supercritical_exponent(k)?;
    if !(m_gl.is_finite() && m_gl >= 1.0) {
        return Err(QsError::BadMoment(m_gl, "M >= 1"));
    }
    let log_value = (k.gamma() / 2.0 + k.lambda()) * (2.0 * PI).ln() + 2.0 * m_gl.ln()
        - m_gl.powf(2.0 / p) * a_constant(p)?;
    Ok(Flux {
        value: log_value.exp(),
        log_value,
        constant: 1.0,
    })
}

/// Maximizer of `M² exp(-A_p M^{2/p})`; the flux decreases beyond it.
pub fn flux_peak(p: f64) -> Result<f64, QsError> {
    let a = a_constant(p)?;
    Ok((p / a).powf(p / 2.0))
}

/// Large-size behavior `x^slope (ln x)^log_power` of the quasi-stationary profile
/// on the critical line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailPrediction {
    Power { slope: f64, log_power: f64 },
    /// No quasi-stationary solution is expected for `M < 1`.
    Nonexistent,
}

pub fn inner_tail_prediction(k: &KernelSpec, m_gl: f64) -> Result<TailPrediction, QsError> {
    if k.flags().tail_vs_one != Side::Equal {
        return Err(QsError::NotCritical(k.tail_exponent()));
    }
    if !(m_gl.is_finite() && m_gl > 0.0) {
        return Err(QsError::BadMoment(m_gl, "finite and positive"));
    }
    Ok(match Side::classify(m_gl, 1.0) {
        Side::Above => TailPrediction::Power {
            slope: k.lambda() - 1.0 - m_gl * m_gl,
            log_power: 0.0,
        },
        Side::Equal => TailPrediction::Power {
            slope: -(k.gamma() + 3.0) / 2.0,
            log_power: -2.0,
        },
        Side::Below => TailPrediction::Nonexistent,
    })
}
