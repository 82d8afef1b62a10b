//! Right-hand side of the truncated system.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{OdeError, RhsMode, RunConfig, StateVector};
use crate::kernel::KernelSpec;
use crate::numerics::NeumaierSum;

/// Above this many bins the separable gain term is computed by FFT.
pub const FFT_THRESHOLD: usize = 4096;

/// Gains for sizes up to this bound are always summed directly in FFT mode.
const DIRECT_HEAD: usize = 256;

/// Largest truncation for which the generic mode tabulates the kernel.
const TABLE_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dc: Vec<f64>,
    pub leaked_mass_rate: f64,
    pub leaked_number_rate: f64,
}

struct Separable {
    scale: f64,
    pa: Vec<f64>,
    pb: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    conv: Vec<f64>,
    suffix_b: Vec<f64>,
    suffix_jb: Vec<f64>,
    fft: Option<FftScratch>,
}

struct FftScratch {
    planner: FftPlanner<f64>,
    plans: Vec<(usize, Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    buf: Vec<Complex<f64>>,
    prod: Vec<Complex<f64>>,
}

impl FftScratch {
    fn plans(&mut self, len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        if let Some((_, f, i)) = self.plans.iter().find(|p| p.0 == len) {
            return (f.clone(), i.clone());
        }
        let f = self.planner.plan_fft_forward(len);
        let i = self.planner.plan_fft_inverse(len);
        self.plans.push((len, f.clone(), i.clone()));
        (f, i)
    }
}

/// Reusable evaluator of `dc/dt` for a fixed kernel, source and truncation.
pub struct RhsEngine {
    kernel: KernelSpec,
    n: usize,
    eta: Vec<f64>,
    sep: Option<Separable>,
    table: Option<Vec<f64>>,
}

impl RhsEngine {
    pub fn new(cfg: &RunConfig) -> Result<Self, OdeError> {
        cfg.validate()?;
        let n = cfg.n_bins;
        let mut eta = vec![0.0; n];
        for &(size, rate) in cfg.source.entries() {
            eta[size - 1] += rate;
        }
        let sep = match cfg.rhs_mode {
            RhsMode::SeparableFast => {
                let s = cfg.kernel.separable().expect("validated");
                let pa = (1..=n).map(|k| (k as f64).powf(s.alpha)).collect();
                let pb = (1..=n).map(|k| (k as f64).powf(s.beta)).collect();
                Some(Separable {
                    scale: s.scale,
                    pa,
                    pb,
                    a: vec![0.0; n],
                    b: vec![0.0; n],
                    conv: vec![0.0; 2 * n],
                    suffix_b: vec![0.0; n + 2],
                    suffix_jb: vec![0.0; n + 2],
                    fft: (n > FFT_THRESHOLD).then(|| FftScratch {
                        planner: FftPlanner::new(),
                        plans: Vec::new(),
                        buf: Vec::new(),
                        prod: Vec::new(),
                    }),
                })
            }
            RhsMode::Generic => None,
        };
        let table = (cfg.rhs_mode == RhsMode::Generic && n <= TABLE_LIMIT).then(|| {
            let mut t = vec![0.0; n * n];
            for i in 1..=n {
                for j in 1..=n {
                    t[(i - 1) * n + (j - 1)] = cfg.kernel.rate(i as f64, j as f64);
                }
            }
            t
        });
        Ok(Self {
            kernel: cfg.kernel.clone(),
            n,
            eta,
            sep,
            table,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n
    }

    /// Writes `dc/dt` into `dc` and returns `(leaked mass rate, leaked number rate)`.
    pub fn eval(&mut self, c: &[f64], dc: &mut [f64]) -> (f64, f64) {
        debug_assert_eq!(c.len(), self.n);
        let occupied = c.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
        let rates = if self.sep.is_some() {
            self.eval_separable(c, dc, occupied)
        } else {
            self.eval_generic(c, dc, occupied)
        };
        for (d, e) in dc.iter_mut().zip(&self.eta) {
            *d += e;
        }
        rates
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t[(i - 1) * self.n + (j - 1)],
            None => self.kernel.rate(i as f64, j as f64),
        }
    }

    fn eval_generic(&self, c: &[f64], dc: &mut [f64], m: usize) -> (f64, f64) {
        let n = self.n;
        dc.iter_mut().for_each(|d| *d = 0.0);
        if m == 0 {
            return (0.0, 0.0);
        }
        for size in 2..=n.min(2 * m) {
            let mut gain = NeumaierSum::new();
            for l in 1..size {
                let (a, b) = (c[size - l - 1], c[l - 1]);
                if a != 0.0 && b != 0.0 {
                    gain.add(self.k(size - l, l) * a * b);
                }
            }
            dc[size - 1] = 0.5 * gain.value();
        }
        for i in 1..=m {
            let ci = c[i - 1];
            if ci == 0.0 {
                continue;
            }
            let mut loss = NeumaierSum::new();
            for l in 1..=m {
                let cl = c[l - 1];
                if cl != 0.0 {
                    loss.add(self.k(i, l) * cl);
                }
            }
            dc[i - 1] -= ci * loss.value();
        }
        let mut mass = NeumaierSum::new();
        let mut number = NeumaierSum::new();
        if 2 * m > n {
            for i in 1..=m {
                let ci = c[i - 1];
                if ci == 0.0 {
                    continue;
                }
                for j in (n + 1 - i).max(1)..=m {
                    let cj = c[j - 1];
                    if cj != 0.0 {
                        let r = self.k(i, j) * ci * cj;
                        number.add(r);
                        mass.add((i + j) as f64 * r);
                    }
                }
            }
        }
        (0.5 * mass.value(), 0.5 * number.value())
    }

    fn eval_separable(&mut self, c: &[f64], dc: &mut [f64], m: usize) -> (f64, f64) {
        let n = self.n;
        let sep = self.sep.as_mut().expect("separable mode");
        dc.iter_mut().for_each(|d| *d = 0.0);
        if m == 0 {
            return (0.0, 0.0);
        }
        let mut ma = NeumaierSum::new();
        let mut mb = NeumaierSum::new();
        for k in 0..m {
            sep.a[k] = sep.pa[k] * c[k];
            sep.b[k] = sep.pb[k] * c[k];
            ma.add(sep.a[k]);
            mb.add(sep.b[k]);
        }
        let (ma, mb) = (ma.value(), mb.value());
        let top = n.min(2 * m);

        // conv[size - 2] = Σ_{i + j = size} a_i b_j
        let use_fft = sep.fft.is_some() && m > DIRECT_HEAD;
        let direct_top = if use_fft { top.min(DIRECT_HEAD) } else { top };
        let (a, b) = (&sep.a[..m], &sep.b[..m]);
        for size in 2..=direct_top {
            let lo = if size > m { size - m } else { 1 };
            let hi = (size - 1).min(m);
            let mut s = 0.0;
            for i in lo..=hi {
                s += a[i - 1] * b[size - i - 1];
            }
            sep.conv[size - 2] = s;
        }
        if use_fft && top > direct_top {
            let fft = sep.fft.as_mut().expect("fft scratch");
            let len = (2 * m).next_power_of_two();
            let (fwd, inv) = fft.plans(len);
            fft.buf.clear();
            fft.buf.resize(len, Complex::new(0.0, 0.0));
            for k in 0..m {
                fft.buf[k] = Complex::new(a[k], b[k]);
            }
            fwd.process(&mut fft.buf);
            fft.prod.clear();
            fft.prod.resize(len, Complex::new(0.0, 0.0));
            for k in 0..len {
                let z = fft.buf[k];
                let zc = fft.buf[(len - k) % len].conj();
                let fa = (z + zc) * 0.5;
                let fb = (z - zc) * Complex::new(0.0, -0.5);
                fft.prod[k] = fa * fb;
            }
            inv.process(&mut fft.prod);
            let norm = 1.0 / len as f64;
            let mut fft_mass = NeumaierSum::new();
            for size in (direct_top + 1)..=top {
                let v = (fft.prod[size - 2].re * norm).max(0.0);
                sep.conv[size - 2] = v;
                fft_mass.add(size as f64 * v);
            }
            // Rescale the transformed part so that the mass it carries matches the
            // exact value Σ_{i+j ≤ top, i+j > direct_top} (i+j) a_i b_j.
            let exact = pair_mass(a, b, top) - {
                let mut head = NeumaierSum::new();
                for size in 2..=direct_top {
                    head.add(size as f64 * sep.conv[size - 2]);
                }
                head.value()
            };
            let got = fft_mass.value();
            if got > 0.0 && exact > 0.0 {
                let f = exact / got;
                for size in (direct_top + 1)..=top {
                    sep.conv[size - 2] *= f;
                }
            }
        }

        let s = sep.scale;
        for size in 2..=top {
            dc[size - 1] = s * sep.conv[size - 2];
        }
        for k in 0..m {
            dc[k] -= s * c[k] * (sep.pa[k] * mb + sep.pb[k] * ma);
        }

        if 2 * m <= n {
            return (0.0, 0.0);
        }
        // suffix sums over j ≥ q of b_j and j b_j
        sep.suffix_b[m + 1] = 0.0;
        sep.suffix_jb[m + 1] = 0.0;
        for j in (1..=m).rev() {
            sep.suffix_b[j] = sep.suffix_b[j + 1] + sep.b[j - 1];
            sep.suffix_jb[j] = sep.suffix_jb[j + 1] + j as f64 * sep.b[j - 1];
        }
        let mut mass = NeumaierSum::new();
        let mut number = NeumaierSum::new();
        for i in (n + 1 - m)..=m {
            let ai = sep.a[i - 1];
            if ai == 0.0 {
                continue;
            }
            let q = n + 1 - i;
            number.add(ai * sep.suffix_b[q]);
            mass.add(ai * (i as f64 * sep.suffix_b[q] + sep.suffix_jb[q]));
        }
        (s * mass.value(), s * number.value())
    }
}

/// `Σ_{i+j ≤ top} (i+j) a_i b_j` in O(m) from prefix sums (arrays indexed from size 1).
fn pair_mass(a: &[f64], b: &[f64], top: usize) -> f64 {
    let m = a.len();
    // prefix sums of b_j and j b_j over j ≤ q
    let mut pb = vec![0.0; m + 1];
    let mut pjb = vec![0.0; m + 1];
    for j in 1..=m {
        pb[j] = pb[j - 1] + b[j - 1];
        pjb[j] = pjb[j - 1] + j as f64 * b[j - 1];
    }
    let mut s = NeumaierSum::new();
    for i in 1..=m.min(top - 1) {
        let q = (top - i).min(m);
        s.add(a[i - 1] * (i as f64 * pb[q] + pjb[q]));
    }
    s.value()
}

/// One-shot evaluation of the right-hand side.
pub fn rhs(state: &StateVector, cfg: &RunConfig) -> Result<Derivative, OdeError> {
    if state.n_bins() != cfg.n_bins {
        return Err(OdeError::Dimension {
            got: state.n_bins(),
            expected: cfg.n_bins,
        });
    }
    if let Some(bin) = state.c.iter().position(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { bin: bin + 1 });
    }
    let mut engine = RhsEngine::new(cfg)?;
    let mut dc = vec![0.0; cfg.n_bins];
    let (leaked_mass_rate, leaked_number_rate) = engine.eval(&state.c, &mut dc);
    Ok(Derivative {
        dc,
        leaked_mass_rate,
        leaked_number_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::SourceSpec;

    #[test]
    fn constant_kernel_by_hand() {
        let mut cfg = RunConfig::new(KernelSpec::constant(), 8, 1.0);
        let mut s = StateVector::empty(8);
        s.c[0] = 1.0;
        for mode in [RhsMode::Generic, RhsMode::SeparableFast] {
            cfg.rhs_mode = mode;
            let d = rhs(&s, &cfg).unwrap();
            assert_eq!(d.dc[0], 0.0);
            assert_eq!(d.dc[1], 0.5);
        }
    }

    #[test]
    fn empty_is_zero() {
        let mut cfg = RunConfig::new(KernelSpec::constant(), 8, 1.0);
        cfg.source = SourceSpec::none();
        let d = rhs(&StateVector::empty(8), &cfg).unwrap();
        assert!(d.dc.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = RunConfig::new(KernelSpec::constant(), 4, 1.0);
        let mut s = StateVector::empty(4);
        s.c[2] = f64::NAN;
        assert_eq!(rhs(&s, &cfg), Err(OdeError::NonFinite { bin: 3 }));
        assert!(matches!(
            rhs(&StateVector::empty(3), &cfg),
            Err(OdeError::Dimension { .. })
        ));
    }

    #[test]
    fn leak_accounts_for_outgoing_pairs() {
        // c_2 = 1 with N = 3: every pair (2,2) leaves with mass 4
        let cfg = RunConfig {
            source: SourceSpec::none(),
            ..RunConfig::new(KernelSpec::constant(), 3, 1.0)
        };
        let s = StateVector::from_concentrations(vec![0.0, 1.0, 0.0]);
        let d = rhs(&s, &cfg).unwrap();
        assert_eq!(d.leaked_number_rate, 0.5);
        assert_eq!(d.leaked_mass_rate, 2.0);
        assert_eq!(d.dc[1], -1.0);
    }
}
