//! Adaptive Dormand–Prince 5(4) integration with positivity clamping.
//!
//! The ODE state is `(c_1..c_N, leaked_mass, leaked_number)`, so the ledger is
//! advanced by the same linear combination of stages as the concentrations.

use serde::Serialize;

use super::rhs::RhsEngine;
use super::{OdeError, RunConfig, StateVector};
use crate::numerics::NeumaierSum;

/// Positive concentrations below this are set to zero after each accepted step.
pub const FLUSH_BELOW: f64 = 1e-140;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone)]
pub struct IntegratorOptions {
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    /// Record the moment series at every accepted step (otherwise only at snapshots).
    pub record_every_step: bool,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            max_steps: 50_000_000,
            initial_step: None,
            record_every_step: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRecord {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    pub m_gl: f64,
    pub m_one_minus_lambda: f64,
    pub m2: f64,
    pub leaked_mass: f64,
    pub leaked_number: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<StateVector>,
    pub moments: Vec<MomentRecord>,
    pub final_state: StateVector,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

struct MomentTables {
    gl: Vec<f64>,
    one_minus_lambda: Vec<f64>,
}

impl MomentTables {
    fn new(cfg: &RunConfig) -> Self {
        let n = cfg.n_bins;
        let a = cfg.kernel.sum_exponent();
        let b = 1.0 - cfg.kernel.lambda();
        Self {
            gl: (1..=n).map(|k| (k as f64).powf(a)).collect(),
            one_minus_lambda: (1..=n).map(|k| (k as f64).powf(b)).collect(),
        }
    }

    fn record(&self, t: f64, y: &[f64], n: usize) -> MomentRecord {
        let mut s = [NeumaierSum::new(); 5];
        for (i, &v) in y[..n].iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let k = (i + 1) as f64;
            s[0].add(v);
            s[1].add(k * v);
            s[2].add(self.gl[i] * v);
            s[3].add(self.one_minus_lambda[i] * v);
            s[4].add(k * k * v);
        }
        MomentRecord {
            t,
            m0: s[0].value(),
            m1: s[1].value(),
            m_gl: s[2].value(),
            m_one_minus_lambda: s[3].value(),
            m2: s[4].value(),
            leaked_mass: y[n],
            leaked_number: y[n + 1],
        }
    }
}

/// Integrates from `initial.t` to `cfg.t_end` with default options.
pub fn integrate(cfg: &RunConfig, initial: &StateVector) -> Result<Trajectory, OdeError> {
    integrate_with(cfg, initial, &IntegratorOptions::default(), &mut |_, _| {})
}

fn full_eval(engine: &mut RhsEngine, y: &[f64], dy: &mut [f64], n: usize) {
    let (lm, ln) = engine.eval(&y[..n], &mut dy[..n]);
    dy[n] = lm;
    dy[n + 1] = ln;
}

/// Like [`integrate`]; `on_snapshot` sees every snapshot as soon as it is taken,
/// together with the moment series recorded up to that point.
pub fn integrate_with(
    cfg: &RunConfig,
    initial: &StateVector,
    opts: &IntegratorOptions,
    on_snapshot: &mut dyn FnMut(&StateVector, &[MomentRecord]),
) -> Result<Trajectory, OdeError> {
    let mut engine = RhsEngine::new(cfg)?;
    let n = cfg.n_bins;
    if initial.n_bins() != n {
        return Err(OdeError::Dimension {
            got: initial.n_bins(),
            expected: n,
        });
    }
    if let Some(bin) = initial.c.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(OdeError::NonFinite { bin: bin + 1 });
    }
    let tables = MomentTables::new(cfg);
    let dim = n + 2;
    let (rtol, atol) = (cfg.rel_tol, cfg.abs_tol);

    let mut y = initial.c.clone();
    y.push(initial.leaked_mass);
    y.push(initial.leaked_number);
    let mut t = initial.t;
    let t_end = cfg.t_end;

    let mut stops: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s >= t && s <= t_end)
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut next_stop = 0;

    let mut traj = Trajectory {
        snapshots: Vec::new(),
        moments: vec![tables.record(t, &y, n)],
        final_state: initial.clone(),
        accepted: 0,
        rejected: 0,
        rhs_evals: 0,
    };
    let take_snapshot = |t: f64, y: &[f64], traj: &mut Trajectory, cb: &mut dyn FnMut(&StateVector, &[MomentRecord])| {
        let s = StateVector {
            c: y[..n].to_vec(),
            t,
            leaked_mass: y[n],
            leaked_number: y[n + 1],
        };
        cb(&s, &traj.moments);
        traj.snapshots.push(s);
    };
    while next_stop < stops.len() && stops[next_stop] <= t {
        take_snapshot(t, &y, &mut traj, on_snapshot);
        next_stop += 1;
    }

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];
    full_eval(&mut engine, &y, &mut k[0], n);
    traj.rhs_evals += 1;

    let scale = |a: f64, b: f64| atol + rtol * a.abs().max(b.abs());
    let norm = |v: &[f64], y: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(e, yy)| {
                let r = e / scale(*yy, *yy);
                r * r
            })
            .sum();
        (s / v.len() as f64).sqrt()
    };

    let span = t_end - t;
    if span <= 0.0 {
        traj.final_state = StateVector {
            c: y[..n].to_vec(),
            t,
            leaked_mass: y[n],
            leaked_number: y[n + 1],
        };
        return Ok(traj);
    }

    let mut h = match opts.initial_step {
        Some(h) => h,
        None => {
            let d0 = norm(&y, &y);
            let d1 = norm(&k[0], &y);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 {
                1e-6
            } else {
                0.01 * d0 / d1
            };
            let h0 = h0.min(span);
            for i in 0..dim {
                ytmp[i] = y[i] + h0 * k[0][i];
            }
            full_eval(&mut engine, &ytmp, &mut k[1], n);
            traj.rhs_evals += 1;
            let diff: Vec<f64> = (0..dim).map(|i| (k[1][i] - k[0][i]) / h0).collect();
            let d2 = norm(&diff, &y);
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0).min(h1).min(span)
        }
    };

    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;
    let h_min_rel = 1e-14;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(OdeError::StepLimit { t, steps });
        }
        steps += 1;
        let target = if next_stop < stops.len() {
            stops[next_stop]
        } else {
            t_end
        };
        if target - t <= h_min_rel * t.abs().max(1.0) {
            // stops closer than the time resolution are merged
            t = target;
            while next_stop < stops.len() && stops[next_stop] <= t {
                take_snapshot(t, &y, &mut traj, on_snapshot);
                next_stop += 1;
            }
            continue;
        }
        let h_prop = h;
        let mut hit = false;
        if t + h >= target || target - (t + h) < 1e-12 * target.abs().max(1.0) {
            h = target - t;
            hit = true;
        }
        if h <= h_min_rel * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t, h });
        }

        // stages
        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0];
        {
            for i in 0..dim {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            full_eval(&mut engine, &ytmp, &mut rest[0], n);
            let k2 = &rest[0];
            for i in 0..dim {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
        }
        full_eval(&mut engine, &ytmp, &mut rest[1], n);
        {
            let (k2, k3) = (&rest[0], &rest[1]);
            for i in 0..dim {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
        }
        full_eval(&mut engine, &ytmp, &mut rest[2], n);
        {
            let (k2, k3, k4) = (&rest[0], &rest[1], &rest[2]);
            for i in 0..dim {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
        }
        full_eval(&mut engine, &ytmp, &mut rest[3], n);
        {
            let (k2, k3, k4, k5) = (&rest[0], &rest[1], &rest[2], &rest[3]);
            for i in 0..dim {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
        }
        full_eval(&mut engine, &ytmp, &mut rest[4], n);
        {
            let (k3, k4, k5, k6) = (&rest[1], &rest[2], &rest[3], &rest[4]);
            for i in 0..dim {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
        }
        full_eval(&mut engine, &ynew, &mut rest[5], n);
        traj.rhs_evals += 6;

        let mut acc = 0.0;
        {
            let (k3, k4, k5, k6, k7) = (&rest[1], &rest[2], &rest[3], &rest[4], &rest[5]);
            for i in 0..dim {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let r = e / scale(y[i], ynew[i]);
                acc += r * r;
            }
        }
        let err = (acc / dim as f64).sqrt();
        if !err.is_finite() {
            return Err(OdeError::ToleranceFailure { t });
        }

        let negative = ynew[..n].iter().any(|&v| v < -atol);
        if err > 1.0 || negative {
            traj.rejected += 1;
            let fac = if negative && err <= 1.0 {
                0.5
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            };
            h *= fac;
            last_rejected = true;
            continue;
        }

        // accepted
        traj.accepted += 1;
        t = if hit { target } else { t + h };
        let mut modified = false;
        for v in ynew[..n].iter_mut() {
            if *v < FLUSH_BELOW && *v != 0.0 {
                *v = 0.0;
                modified = true;
            }
        }
        // the ledger has nonnegative rates; negative stage weights can still dent it
        for i in n..n + 2 {
            ynew[i] = ynew[i].max(y[i]);
        }
        std::mem::swap(&mut y, &mut ynew);
        if modified {
            full_eval(&mut engine, &y, &mut k[0], n);
            traj.rhs_evals += 1;
        } else {
            k.swap(0, 6);
        }
        if opts.record_every_step || hit {
            traj.moments.push(tables.record(t, &y, n));
        }
        if hit && next_stop < stops.len() && stops[next_stop] == target {
            while next_stop < stops.len() && stops[next_stop] <= t {
                take_snapshot(t, &y, &mut traj, on_snapshot);
                next_stop += 1;
            }
        }

        let mut fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_old.powf(0.4 / 5.0);
        fac = fac.clamp(0.2, 10.0);
        if last_rejected {
            fac = fac.min(1.0);
        }
        err_old = err.max(1e-4);
        last_rejected = false;
        h = if hit {
            // a step shortened to land on a stop says little about the natural size
            h_prop.max(h * fac)
        } else {
            h * fac
        };
    }

    traj.final_state = StateVector {
        c: y[..n].to_vec(),
        t,
        leaked_mass: y[n],
        leaked_number: y[n + 1],
    };
    Ok(traj)
}
