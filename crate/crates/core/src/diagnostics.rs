//! Self-similarity diagnostics on simulated snapshots: rescaling, collapse
//! distances, power-law fits and moment indicators.

use serde::Serialize;
use thiserror::Error;

use crate::ode::{moment_of, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("need at least {need} points in the fit window, found {found}")]
    TooFewPoints { need: usize, found: usize },
    #[error("snapshot carries no mass")]
    ZeroMass,
    #[error("state is empty")]
    Empty,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("time range spans {0:.3} e-foldings of ln t, need at least 2")]
    ShortRange(f64),
}

pub const MIN_FIT_POINTS: usize = 8;

/// Log-grid resolution used for collapse distances.
pub const COLLAPSE_BINS_PER_DECADE: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledSnapshot {
    pub xi: Vec<f64>,
    pub phi: Vec<f64>,
    pub t: f64,
    pub l_used: f64,
    pub amplitude: f64,
}

impl RescaledSnapshot {
    /// Grid spacing in `ξ`.
    pub fn dxi(&self) -> f64 {
        1.0 / self.l_used
    }

    /// `Σ ξ Φ Δξ`.
    pub fn mass(&self) -> f64 {
        let d = self.dxi();
        self.xi
            .iter()
            .zip(&self.phi)
            .map(|(x, p)| x * p * d)
            .sum()
    }
}

/// Amplitude `t / L²` of the standard scaling, which keeps `∫ ξΦ dξ = m_1 / t`.
pub fn standard_amplitude(t: f64, l: f64) -> f64 {
    t / (l * l)
}

/// `ξ_n = n / L`, `Φ_n = c_n / amplitude` over the occupied bins.
pub fn rescale_snapshot(
    c: &[f64],
    l: f64,
    t: f64,
    amplitude: f64,
) -> Result<RescaledSnapshot, DiagError> {
    if !(l > 0.0 && l.is_finite() && amplitude > 0.0 && amplitude.is_finite() && t >= 0.0) {
        return Err(DiagError::Invalid(format!(
            "L = {l}, t = {t}, amplitude = {amplitude}"
        )));
    }
    let mut xi = Vec::new();
    let mut phi = Vec::new();
    for (i, &v) in c.iter().enumerate() {
        if v != 0.0 {
            xi.push((i + 1) as f64 / l);
            phi.push(v / amplitude);
        }
    }
    Ok(RescaledSnapshot {
        xi,
        phi,
        t,
        l_used: l,
        amplitude,
    })
}

fn log_bin(x: f64, origin: f64) -> i64 {
    ((x.log10() - origin) * COLLAPSE_BINS_PER_DECADE).floor() as i64
}

/// Normalized L¹ distance between the mass densities `ξΦ` of two rescaled
/// snapshots on a common logarithmic grid.
pub fn collapse_distance(a: &RescaledSnapshot, b: &RescaledSnapshot) -> Result<f64, DiagError> {
    if a.xi.is_empty() || b.xi.is_empty() {
        return Err(DiagError::Empty);
    }
    let origin = a
        .xi
        .iter()
        .chain(&b.xi)
        .fold(f64::INFINITY, |m, &x| m.min(x))
        .log10();
    let top = a
        .xi
        .iter()
        .chain(&b.xi)
        .map(|&x| log_bin(x, origin))
        .max()
        .unwrap_or(0);
    let bins = (top + 1) as usize;
    let fill = |s: &RescaledSnapshot| {
        let mut h = vec![0.0; bins];
        let d = s.dxi();
        for (x, p) in s.xi.iter().zip(&s.phi) {
            h[log_bin(*x, origin).max(0) as usize] += x * p * d;
        }
        h
    };
    let (ha, hb) = (fill(a), fill(b));
    let (ma, mb): (f64, f64) = (ha.iter().sum(), hb.iter().sum());
    if !(ma > 0.0 && mb > 0.0) {
        return Err(DiagError::ZeroMass);
    }
    let l1: f64 = ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum();
    Ok(l1 / (0.5 * (ma + mb)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

fn in_window(points: &[(f64, f64)], window: (f64, f64)) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|&(x, y)| x >= window.0 && x <= window.1 && x > 0.0 && y > 0.0)
        .collect()
}

/// Ordinary least squares `y = c + s x`.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let stderr = if xs.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, stderr)
}

/// Least-squares slope of `ln y` against `ln x` for points with `x` in the window.
pub fn powerlaw_fit(points: &[(f64, f64)], window: (f64, f64)) -> Result<PowerFit, DiagError> {
    let pts = in_window(points, window);
    if pts.len() < MIN_FIT_POINTS {
        return Err(DiagError::TooFewPoints {
            need: MIN_FIT_POINTS,
            found: pts.len(),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (exponent, intercept, stderr) = ols(&xs, &ys);
    Ok(PowerFit {
        exponent,
        stderr,
        intercept,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogCorrectedFit {
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub log_power: f64,
    pub log_power_stderr: f64,
    pub points: usize,
}

/// Fits `ln y = c + s ln x + q ln ln x` by least squares (needs `x > 1`).
pub fn powerlaw_fit_log_corrected(
    points: &[(f64, f64)],
    window: (f64, f64),
) -> Result<LogCorrectedFit, DiagError> {
    let pts: Vec<(f64, f64)> = in_window(points, window)
        .into_iter()
        .filter(|p| p.0 > 1.0)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(DiagError::TooFewPoints {
            need: MIN_FIT_POINTS,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let u: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let v: Vec<f64> = u.iter().map(|x| x.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mean = |z: &[f64]| z.iter().sum::<f64>() / n;
    let (mu, mv, my) = (mean(&u), mean(&v), mean(&y));
    let cov = |a: &[f64], ma: f64, b: &[f64], mb: f64| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum()
    };
    let suu = cov(&u, mu, &u, mu);
    let svv = cov(&v, mv, &v, mv);
    let suv = cov(&u, mu, &v, mv);
    let suy = cov(&u, mu, &y, my);
    let svy = cov(&v, mv, &y, my);
    let det = suu * svv - suv * suv;
    if !(det > 0.0) {
        return Err(DiagError::Invalid("degenerate design for log-corrected fit".into()));
    }
    let s = (svv * suy - suv * svy) / det;
    let q = (suu * svy - suv * suy) / det;
    let c = my - s * mu - q * mv;
    let ssr: f64 = (0..pts.len())
        .map(|i| {
            let r = y[i] - c - s * u[i] - q * v[i];
            r * r
        })
        .sum();
    let sigma2 = if pts.len() > 3 { ssr / (n - 3.0) } else { 0.0 };
    Ok(LogCorrectedFit {
        exponent: s,
        exponent_stderr: (sigma2 * svv / det).sqrt(),
        log_power: q,
        log_power_stderr: (sigma2 * suu / det).sqrt(),
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogMomentFit {
    pub q: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Fits `M ∝ (ln t)^q` by least squares of `ln M` against `ln ln t`.
pub fn logcorrected_moment_fit(series: &[(f64, f64)]) -> Result<LogMomentFit, DiagError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, m)| t > 1.0 && m > 0.0 && m.is_finite())
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(DiagError::TooFewPoints {
            need: MIN_FIT_POINTS,
            found: pts.len(),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln().ln()).collect();
    let lo = xs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if hi - lo < 2.0 {
        return Err(DiagError::ShortRange(hi - lo));
    }
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (q, _, stderr) = ols(&xs, &ys);
    Ok(LogMomentFit {
        q,
        stderr,
        points: pts.len(),
    })
}

/// `m_2 m_0 / m_1²`; equals 1 exactly when all mass sits in one bin.
pub fn concentration_indicator(state: &StateVector) -> Result<f64, DiagError> {
    let m0 = moment_of(&state.c, 0.0);
    let m1 = moment_of(&state.c, 1.0);
    let m2 = moment_of(&state.c, 2.0);
    if !(m1 > 0.0) {
        return Err(DiagError::Empty);
    }
    Ok(m2 * m0 / (m1 * m1))
}

/// `m_1 / m_0`.
pub fn characteristic_length(state: &StateVector) -> Result<f64, DiagError> {
    let m0 = moment_of(&state.c, 0.0);
    if !(m0 > 0.0) {
        return Err(DiagError::Empty);
    }
    Ok(moment_of(&state.c, 1.0) / m0)
}

/// Power-law target for an inner-tail fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailTarget {
    pub exponent: f64,
    pub log_power: f64,
}

impl TailTarget {
    /// `n^{-(γ+3)/2}`.
    pub fn stationary(gamma: f64) -> Self {
        Self {
            exponent: -(gamma + 3.0) / 2.0,
            log_power: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailReport {
    pub fit: PowerFit,
    pub target: TailTarget,
    pub deviation: f64,
}

/// Fits the tail `c_n` over `window`, which must sit inside `[4 L_η, N/4]`.
pub fn inner_tail_report(
    state: &StateVector,
    window: (f64, f64),
    source_support: usize,
    target: TailTarget,
) -> Result<TailReport, DiagError> {
    let n = state.n_bins() as f64;
    let lo = 4.0 * source_support.max(1) as f64;
    if window.0 < lo || window.1 > n / 4.0 || window.0 >= window.1 {
        return Err(DiagError::Invalid(format!(
            "window [{}, {}] must lie inside [{lo}, {}]",
            window.0,
            window.1,
            n / 4.0
        )));
    }
    let points: Vec<(f64, f64)> = state
        .c
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64, v))
        .collect();
    let fit = powerlaw_fit(&points, window)?;
    Ok(TailReport {
        fit,
        target,
        deviation: fit.exponent - target.exponent,
    })
}

/// Default fit window: the central two decades of `[4 L_η, N/4]`
/// (the whole range when it is narrower).
pub fn default_window(source_support: usize, n_bins: usize) -> (f64, f64) {
    let lo = (4 * source_support.max(1)) as f64;
    let hi = n_bins as f64 / 4.0;
    let span = (hi / lo).log10();
    if span <= 2.0 {
        return (lo, hi);
    }
    let mid = (lo.log10() + hi.log10()) / 2.0;
    (10f64.powf(mid - 1.0), 10f64.powf(mid + 1.0))
}

/// `G(x) = Σ_{k > x} k^{1-λ} c_k` at every integer `x` in `1..N`.
pub fn cumulative_tail(state: &StateVector, lambda: f64) -> Vec<(f64, f64)> {
    let n = state.n_bins();
    let mut out = vec![(0.0, 0.0); n.saturating_sub(1)];
    let mut acc = 0.0;
    for k in (2..=n).rev() {
        acc += (k as f64).powf(1.0 - lambda) * state.c[k - 1];
        out[k - 2] = ((k - 1) as f64, acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin_rescale() {
        let mut c = vec![0.0; 10];
        c[4] = 1.0;
        let r = rescale_snapshot(&c, 5.0, 1.0, 1.0).unwrap();
        assert_eq!(r.xi, vec![1.0]);
        assert_eq!(r.phi, vec![1.0]);
    }

    #[test]
    fn disjoint_unit_masses() {
        let a = RescaledSnapshot {
            xi: vec![1.0],
            phi: vec![1.0],
            t: 1.0,
            l_used: 1.0,
            amplitude: 1.0,
        };
        let b = RescaledSnapshot {
            xi: vec![2.0],
            phi: vec![0.5],
            ..a.clone()
        };
        assert!((collapse_distance(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(collapse_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn indicator_by_hand() {
        let s = StateVector::from_concentrations(vec![1.0, 0.0, 1.0]);
        assert!((concentration_indicator(&s).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(characteristic_length(&s).unwrap(), 2.0);
        assert!(concentration_indicator(&StateVector::empty(3)).is_err());
    }

    #[test]
    fn few_points() {
        let pts: Vec<(f64, f64)> = (1..5).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(
            powerlaw_fit(&pts, (0.0, 10.0)),
            Err(DiagError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn windows() {
        assert_eq!(default_window(1, 64), (4.0, 16.0));
        let (a, b) = default_window(1, 1 << 14);
        assert!((b / a - 100.0).abs() < 1e-9);
    }
}
