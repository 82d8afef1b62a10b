//! Truncated discrete coagulation system with injection.
//!
//! Sizes run over `1..=N`. Reactions producing a cluster larger than `N` remove
//! both reactants and credit the mass and one cluster to the leakage ledger.

mod integrate;
mod rhs;

pub use integrate::{integrate, integrate_with, IntegratorOptions, MomentRecord, Trajectory};
pub use rhs::{rhs, Derivative, RhsEngine, FFT_THRESHOLD};

use thiserror::Error;

use crate::kernel::KernelSpec;
use crate::numerics::NeumaierSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid source: {0}")]
    Source(String),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("state has {got} bins, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("non-finite concentration in bin {bin}")]
    NonFinite { bin: usize },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step limit of {steps} reached at t = {t}")]
    StepLimit { t: f64, steps: usize },
    #[error("error estimate is not finite at t = {t}")]
    ToleranceFailure { t: f64 },
}

/// Injection rates `η_n` on a finite set of sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    entries: Vec<(usize, f64)>,
}

impl SourceSpec {
    /// Checks that `Σ n η_n = 1`.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self, OdeError> {
        let s = Self::unnormalized(entries)?;
        let rate = s.mass_rate();
        if (rate - 1.0).abs() > 1e-12 {
            return Err(OdeError::Source(format!(
                "mass injection rate is {rate}, expected 1"
            )));
        }
        Ok(s)
    }

    /// Accepts any nonnegative rates.
    pub fn unnormalized(mut entries: Vec<(usize, f64)>) -> Result<Self, OdeError> {
        for &(n, r) in &entries {
            if n == 0 {
                return Err(OdeError::Source("sizes start at 1".into()));
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(OdeError::Source(format!("rate {r} at size {n}")));
            }
        }
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(OdeError::Source("repeated size".into()));
        }
        Ok(Self { entries })
    }

    /// `η_n = δ_{n,1}`.
    pub fn monomer() -> Self {
        Self {
            entries: vec![(1, 1.0)],
        }
    }

    pub fn none() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    /// Largest injected size `L_η` (0 for an empty source).
    pub fn support(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0)
    }

    pub fn mass_rate(&self) -> f64 {
        self.entries.iter().map(|&(n, r)| n as f64 * r).sum()
    }

    pub fn number_rate(&self) -> f64 {
        self.entries.iter().map(|&(_, r)| r).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    /// `c_n` at index `n - 1`.
    pub c: Vec<f64>,
    pub t: f64,
    pub leaked_mass: f64,
    pub leaked_number: f64,
}

impl StateVector {
    pub fn empty(n_bins: usize) -> Self {
        Self {
            c: vec![0.0; n_bins],
            t: 0.0,
            leaked_mass: 0.0,
            leaked_number: 0.0,
        }
    }

    pub fn from_concentrations(c: Vec<f64>) -> Self {
        Self {
            c,
            t: 0.0,
            leaked_mass: 0.0,
            leaked_number: 0.0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.c.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    Generic,
    SeparableFast,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    pub source: SourceSpec,
    pub n_bins: usize,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub snapshot_times: Vec<f64>,
    pub rhs_mode: RhsMode,
}

impl RunConfig {
    /// Monomer source, default tolerances, the fast mode when the kernel allows it.
    pub fn new(kernel: KernelSpec, n_bins: usize, t_end: f64) -> Self {
        let rhs_mode = if kernel.separable().is_some() {
            RhsMode::SeparableFast
        } else {
            RhsMode::Generic
        };
        Self {
            kernel,
            source: SourceSpec::monomer(),
            n_bins,
            t_end,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            snapshot_times: Vec::new(),
            rhs_mode,
        }
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        if self.n_bins == 0 || self.n_bins < self.source.support() {
            return Err(OdeError::Config(format!(
                "n_bins = {} must be positive and cover the source support {}",
                self.n_bins,
                self.source.support()
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(OdeError::Config(format!("t_end = {}", self.t_end)));
        }
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(OdeError::Config(format!("{name} = {v} must lie in (0, 1e-2]")));
            }
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|t| !(t.is_finite() && **t >= 0.0))
        {
            return Err(OdeError::Config(format!("snapshot time {t}")));
        }
        if self.rhs_mode == RhsMode::SeparableFast && self.kernel.separable().is_none() {
            return Err(OdeError::Config(
                "the separable mode needs a canonical, kmr or constant (gamma = 0) kernel".into(),
            ));
        }
        Ok(())
    }
}

/// `Σ_k k^J c_k` with compensated summation.
pub fn moment(state: &StateVector, j: f64) -> f64 {
    moment_of(&state.c, j)
}

pub(crate) fn moment_of(c: &[f64], j: f64) -> f64 {
    let mut s = NeumaierSum::new();
    for (i, &v) in c.iter().enumerate() {
        if v != 0.0 {
            let k = (i + 1) as f64;
            let w = if j == 0.0 {
                1.0
            } else if j == 1.0 {
                k
            } else if j == 2.0 {
                k * k
            } else {
                k.powf(j)
            };
            s.add(w * v);
        }
    }
    s.value()
}

/// Mass carried per unit time across `k + ½` by coagulation:
/// `Σ_{i≤k} Σ_{k+1-i ≤ j ≤ N} i K(i,j) c_i c_j`.
pub fn mass_flux(state: &StateVector, kernel: &KernelSpec, k_boundary: usize) -> Result<f64, OdeError> {
    let n = state.n_bins();
    if k_boundary == 0 || k_boundary >= n {
        return Err(OdeError::Config(format!(
            "boundary {k_boundary} must lie in [1, {n})"
        )));
    }
    let c = &state.c;
    let mut s = NeumaierSum::new();
    for i in 1..=k_boundary {
        let ci = c[i - 1];
        if ci == 0.0 {
            continue;
        }
        for j in (k_boundary + 1 - i)..=n {
            let cj = c[j - 1];
            if cj != 0.0 {
                s.add(i as f64 * kernel.rate(i as f64, j as f64) * ci * cj);
            }
        }
    }
    Ok(s.value())
}

/// Cumulative `(mass, number)` removed at the truncation boundary.
pub fn boundary_loss(state: &StateVector) -> (f64, f64) {
    (state.leaked_mass, state.leaked_number)
}
