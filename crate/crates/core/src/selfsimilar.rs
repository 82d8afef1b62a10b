//! Closed-form self-similar profiles: the compactly supported profile `Φ_∞`
//! for `γ + λ < 0`, the Dirac profiles, and near-origin exponents on the critical line.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::{KernelSpec, Side, FLAG_TOL};
use crate::quadrature::{self, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("gamma + lambda = {0} must be <= 0")]
    PositiveSum(f64),
    #[error("gamma + lambda = 0: the normalization integral diverges")]
    ZeroSum,
    #[error("grid needs at least 4 points, got {0}")]
    GridTooSmall(usize),
    #[error("value {0} must be finite and positive")]
    NotPositive(f64),
    #[error("Dirac profile with logarithmic scaling needs gamma = -1 and gamma + 2 lambda > 1")]
    WrongRegime,
    #[error("M = {0} > 1: the corresponding moment of the profile would diverge near the origin")]
    MomentTooLarge(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// `(1 - gl)^{1/(1 - gl)}`.
pub fn xi_star(gl: f64) -> Result<f64, ProfileError> {
    if !gl.is_finite() || gl > FLAG_TOL {
        return Err(ProfileError::PositiveSum(gl));
    }
    let q = 1.0 - gl;
    Ok(q.powf(1.0 / q))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileInfty {
    pub gl: f64,
    pub xi_star: f64,
    pub norm_c: f64,
    /// `(ξ, Φ_∞(ξ))`, increasing in `ξ`, all inside `(0, ξ*)`.
    pub samples: Vec<(f64, f64)>,
}

pub const DEFAULT_QUAD_TOL: f64 = 1e-13;

/// Unnormalized shape `ξ^{-gl} (1 - ξ^{1-gl}/(1-gl))^{-1/(1-gl)}` on `(0, ξ*)`, zero beyond.
fn shape(gl: f64, xs: f64, xi: f64) -> f64 {
    if xi <= 0.0 || xi >= xs {
        return 0.0;
    }
    let q = 1.0 - gl;
    let one_minus_u = -(q * (xi / xs).ln()).exp_m1();
    xi.powf(-gl) * one_minus_u.powf(-1.0 / q)
}

/// `∫_0^{ξ*} shape(ξ) g(ξ) dξ`, with `ξ = ξ*(1 - w^m)` removing the endpoint singularity.
fn integrate_shape(
    gl: f64,
    g: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<f64, ProfileError> {
    let q = 1.0 - gl;
    let xs = q.powf(1.0 / q);
    let beta = 1.0 / q;
    let m = q / (-gl);
    let h = |w: f64| {
        let wm = w.powf(m);
        let xi = xs * (1.0 - wm);
        if xi <= 0.0 {
            return 0.0;
        }
        // ln(1 - u) with u = (ξ/ξ*)^q
        let ln_omu = if wm < 1e-12 {
            (q * wm).ln() + (-(q - 1.0) * wm / 2.0).ln_1p()
        } else {
            (-(q * (-wm).ln_1p()).exp_m1()).ln()
        };
        let log_jac = (xs * m).ln() + (m - 1.0) * w.ln();
        (-gl * xi.ln() - beta * ln_omu + log_jac).exp() * g(xi)
    };
    Ok(quadrature::integrate(h, 0.0, 1.0, tol, tol)?.value)
}

impl ProfileInfty {
    /// `Φ_∞(ξ)`; zero outside `(0, ξ*)`.
    pub fn phi(&self, xi: f64) -> f64 {
        self.norm_c * shape(self.gl, self.xi_star, xi)
    }

    /// Exponent of `Φ_∞ ~ ξ^e` as `ξ → 0`.
    pub fn origin_exponent(&self) -> f64 {
        -self.gl
    }

    /// Exponent of `Φ_∞ ~ (ξ* - ξ)^e` as `ξ → ξ*`.
    pub fn edge_exponent(&self) -> f64 {
        -1.0 / (1.0 - self.gl)
    }

    /// `∫_0^{ξ*} Φ_∞(ξ) g(ξ) dξ`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64, tol: f64) -> Result<f64, ProfileError> {
        Ok(self.norm_c * integrate_shape(self.gl, g, tol)?)
    }

    /// Weak-form residual of `-(1+gl)/(1-gl) Φ - ξΦ'/(1-gl) + (ξ^{gl} Φ)' = 0`
    /// against a test function `φ` with `φ(0) = 0`, given with its derivative.
    pub fn weak_residual(
        &self,
        phi: impl Fn(f64) -> f64,
        dphi: impl Fn(f64) -> f64,
        tol: f64,
    ) -> Result<f64, ProfileError> {
        let gl = self.gl;
        let a = (1.0 + gl) / (1.0 - gl);
        let b = 1.0 / (1.0 - gl);
        self.integrate(
            |x| -a * phi(x) + b * (phi(x) + x * dphi(x)) - x.powf(gl) * dphi(x),
            tol,
        )
    }
}

/// Samples `Φ_∞` for `gl = γ + λ < 0` on `grid` points.
pub fn profile_infty(gl: f64, grid: usize) -> Result<ProfileInfty, ProfileError> {
    profile_infty_with_tol(gl, grid, DEFAULT_QUAD_TOL)
}

pub fn profile_infty_with_tol(gl: f64, grid: usize, tol: f64) -> Result<ProfileInfty, ProfileError> {
    let xs = xi_star(gl)?;
    if gl.abs() <= FLAG_TOL {
        return Err(ProfileError::ZeroSum);
    }
    if grid < 4 {
        return Err(ProfileError::GridTooSmall(grid));
    }
    let mass = integrate_shape(gl, |_| 1.0, tol)?;
    let norm_c = 1.0 / mass;

    // half the points log-spaced from the origin, half log-spaced towards ξ*
    let lo_n = grid / 2;
    let hi_n = grid - lo_n;
    let mut samples = Vec::with_capacity(grid);
    let (d0, d1) = (1e-6f64.ln(), 0.5f64.ln());
    for i in 0..lo_n {
        let f = i as f64 / (lo_n - 1).max(1) as f64;
        let xi = xs * (d0 + f * (d1 - d0)).exp();
        samples.push((xi, norm_c * shape(gl, xs, xi)));
    }
    for i in 0..hi_n {
        let f = (i + 1) as f64 / hi_n as f64;
        let gap = (d1 + f * (d0 - d1)).exp();
        let xi = xs * (1.0 - gap);
        samples.push((xi, norm_c * shape(gl, xs, xi)));
    }
    Ok(ProfileInfty {
        gl,
        xi_star: xs,
        norm_c,
        samples,
    })
}

/// Profile for a kernel in the compact-support regime.
pub fn profile_for_kernel(k: &KernelSpec, grid: usize) -> Result<ProfileInfty, ProfileError> {
    profile_infty(k.sum_exponent(), grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiracLaw {
    /// `L = t`, profile `b δ(y - 1/b)`.
    LinearT,
    /// `L = t (ln t)^{1/2}`, profile `(1/a) δ(y - a)`.
    LogT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiracParams {
    pub location: f64,
    pub weight: f64,
    pub law: DiracLaw,
}

/// Dirac profile determined by the limit `b` of the cluster number.
pub fn dirac_b(m0_limit: f64) -> Result<DiracParams, ProfileError> {
    if !(m0_limit.is_finite() && m0_limit > 0.0) {
        return Err(ProfileError::NotPositive(m0_limit));
    }
    Ok(DiracParams {
        location: 1.0 / m0_limit,
        weight: m0_limit,
        law: DiracLaw::LinearT,
    })
}

/// Dirac profile at `a = √K(1,1)` for `γ = -1`.
pub fn dirac_a(k: &KernelSpec) -> Result<DiracParams, ProfileError> {
    let f = k.flags();
    if f.gamma_vs_minus_one != Side::Equal || f.tail_vs_one != Side::Above {
        return Err(ProfileError::WrongRegime);
    }
    let a = k.rate(1.0, 1.0).sqrt();
    Ok(DiracParams {
        location: a,
        weight: 1.0 / a,
        law: DiracLaw::LogT,
    })
}

/// `Φ(ξ) ~ ξ^power (ln 1/ξ)^log_power` as `ξ → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OriginExponent {
    pub power: f64,
    pub log_power: f64,
}

/// Conjectured near-origin behavior on the critical line `γ + 2λ = 1`, `γ ≤ -1`.
pub fn critical_origin_exponent(m_gl: f64, gamma: f64) -> Result<OriginExponent, ProfileError> {
    if !(m_gl.is_finite() && m_gl > 0.0) {
        return Err(ProfileError::NotPositive(m_gl));
    }
    let base = -(gamma + 3.0) / 2.0;
    match Side::classify(m_gl, 1.0) {
        Side::Above => Err(ProfileError::MomentTooLarge(m_gl)),
        Side::Equal => Ok(OriginExponent {
            power: base,
            log_power: -2.0,
        }),
        Side::Below => Ok(OriginExponent {
            power: base - (m_gl * m_gl - 1.0),
            log_power: 0.0,
        }),
    }
}
