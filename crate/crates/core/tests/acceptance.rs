//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 1 5 11`.

use std::f64::consts::{PI, SQRT_2};
use std::time::{Duration, Instant};

use coag_core::diagnostics::{
    characteristic_length, concentration_indicator, inner_tail_report, logcorrected_moment_fit,
    powerlaw_fit, TailTarget,
};
use coag_core::interface::csvio::{moments_to_string, MomentRow};
use coag_core::kernel::KernelSpec;
use coag_core::ode::{
    integrate, rhs, MomentRecord, RhsMode, RunConfig, StateVector, Trajectory,
};
use coag_core::oracle::{constant_kernel_m0, stochastic_run, StochasticConfig};
use coag_core::quasistationary::{a_constant, cn_asymptote, solve_recursion, QsError};
use coag_core::regimes::{classify, Regime};
use coag_core::selfsimilar::profile_infty;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn run_with_snapshots(cfg: &RunConfig) -> Trajectory {
    integrate(cfg, &StateVector::empty(cfg.n_bins)).expect("integration failed")
}

/// Snapshot times at `per_decade` points per decade from 1 to `t_end`.
fn log_times(t_end: f64, per_decade: usize) -> Vec<f64> {
    let decades = t_end.log10();
    let n = (decades * per_decade as f64).round() as usize;
    (0..=n)
        .map(|i| 10f64.powf(decades * i as f64 / n as f64))
        .map(|t| if (t - t_end).abs() < 1e-9 * t_end { t_end } else { t })
        .collect()
}

fn ledger_error(m: &MomentRecord) -> f64 {
    (m.m1 + m.leaked_mass - m.t).abs() / m.t.max(1.0)
}

fn c1_constant_kernel_m0() -> Outcome {
    let mut cfg = RunConfig::new(KernelSpec::constant(), 512, 20.0);
    cfg.snapshot_times = (1..=20).map(f64::from).collect();
    let tr = run_with_snapshots(&cfg);
    let worst = tr
        .snapshots
        .iter()
        .map(|s| {
            let exact = SQRT_2 * (s.t / SQRT_2).tanh();
            let m0: f64 = s.c.iter().sum();
            ((m0 - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        tr.snapshots.len() == 20 && worst <= 1e-4,
        format!("max relative error {worst:.2e} over {} times", tr.snapshots.len()),
    )
}

fn c2_mass_ledger() -> Outcome {
    let cfg = RunConfig::new(KernelSpec::constant(), 512, 20.0);
    let a = run_with_snapshots(&cfg);
    let cfg = RunConfig::new(KernelSpec::canonical(-1.5, 1.8).unwrap(), 4096, 50.0);
    let b = run_with_snapshots(&cfg);
    let ea = a.moments.iter().map(ledger_error).fold(0.0, f64::max);
    let eb = b.moments.iter().map(ledger_error).fold(0.0, f64::max);
    outcome(
        ea <= 1e-8 && eb <= 1e-8,
        format!(
            "constant: {ea:.2e} over {} steps; canonical(-1.5, 1.8): {eb:.2e} over {} steps",
            a.moments.len(),
            b.moments.len()
        ),
    )
}

/// Gross magnitude `½ Σ K c c + c_n Σ K c + η_n` of each derivative component,
/// with `table[(i-1) n + (j-1)] = K(i, j)`.
fn gross_rates(table: &[f64], c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n];
    out[0] = 1.0;
    for i in 1..=n {
        let row = &table[(i - 1) * n..i * n];
        for j in 1..=n {
            let r = row[j - 1] * c[i - 1] * c[j - 1];
            out[i - 1] += r;
            if i + j <= n {
                out[i + j - 1] += 0.5 * r;
            }
        }
    }
    out
}

fn rate_table(k: &KernelSpec, n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            t.push(k.rate(i as f64, j as f64));
        }
    }
    t
}

fn c3_rhs_equivalence() -> Outcome {
    let kernels = [
        KernelSpec::canonical(-1.5, 1.5).unwrap(),
        KernelSpec::canonical(-1.5, 1.8).unwrap(),
        KernelSpec::canonical(0.2, 0.2).unwrap(),
        KernelSpec::constant(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &n in &[64usize, 1024] {
        let tables: Vec<Vec<f64>> = kernels.iter().map(|k| rate_table(k, n)).collect();
        for i in 0..100 {
            let k = kernels[i % kernels.len()].clone();
            let decay: f64 = rng.gen_range(0.0..3.0);
            let c: Vec<f64> = (1..=n)
                .map(|m| rng.gen::<f64>() * (m as f64).powf(-decay))
                .collect();
            let state = StateVector::from_concentrations(c.clone());
            let mut cfg = RunConfig::new(k.clone(), n, 1.0);
            cfg.rhs_mode = RhsMode::Generic;
            let g = rhs(&state, &cfg).unwrap();
            cfg.rhs_mode = RhsMode::SeparableFast;
            let s = rhs(&state, &cfg).unwrap();
            let scale = gross_rates(&tables[i % kernels.len()], &c);
            for m in 0..n {
                worst = worst.max((g.dc[m] - s.dc[m]).abs() / scale[m]);
            }
            let rel = |a: f64, b: f64| {
                if a == b {
                    0.0
                } else {
                    (a - b).abs() / a.abs().max(b.abs())
                }
            };
            worst = worst.max(rel(g.leaked_mass_rate, s.leaked_mass_rate));
            worst = worst.max(rel(g.leaked_number_rate, s.leaked_number_rate));
            count += 1;
        }
    }
    outcome(
        worst <= 1e-10,
        format!("{count} random states, worst relative difference {worst:.2e}"),
    )
}

fn c4_quasistationary_slope() -> Outcome {
    let k = KernelSpec::canonical(-1.5, 1.5).unwrap();
    let m = 6.0;
    let sol = match solve_recursion(&k, m, 500) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("recursion failed: {e}")),
    };
    let pts: Vec<(f64, f64)> = (50..=500)
        .map(|n| {
            let a = cn_asymptote(&k, m, n as f64).unwrap();
            ((n as f64).log10(), sol.log_c(n) - a.log_value)
        })
        .collect();
    let slope = ols_slope(&pts);
    outcome(
        slope.abs() <= 0.05,
        format!("log-ratio slope {slope:.4} per decade over n in [50, 500]"),
    )
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn c5_a_constant() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [1.2, 1.5, 2.0, 3.0] {
        match a_constant(p) {
            Ok(v) => worst = worst.max((v - PI / (PI / p).sin()).abs()),
            Err(e) => return outcome(false, format!("p = {p}: {e}")),
        }
    }
    let divergent = matches!(a_constant(1.0), Err(QsError::Divergent(_)));
    outcome(
        worst <= 1e-8 && divergent,
        format!("max abs error {worst:.2e}; p = 1 divergent: {divergent}"),
    )
}

fn c6_stationary_tail() -> Outcome {
    let k = KernelSpec::canonical(0.2, 0.2).unwrap();
    let cfg = RunConfig::new(k, 1 << 14, 200.0);
    let tr = run_with_snapshots(&cfg);
    match inner_tail_report(&tr.final_state, (32.0, 1024.0), 1, TailTarget::stationary(0.2)) {
        Ok(r) => outcome(
            (r.fit.exponent + 1.6).abs() <= 0.1,
            format!("exponent {:.4} ± {:.4} (target -1.6)", r.fit.exponent, r.fit.stderr),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

/// `(t, L, indicator, m0)` per snapshot with `t ≥ 1`.
fn snapshot_series(tr: &Trajectory) -> Vec<(f64, f64, f64, f64)> {
    tr.snapshots
        .iter()
        .filter(|s| s.t >= 1.0)
        .map(|s| {
            (
                s.t,
                characteristic_length(s).unwrap(),
                concentration_indicator(s).unwrap(),
                s.c.iter().sum(),
            )
        })
        .collect()
}

fn c7_dirac_linear() -> Outcome {
    let t_end = 1e3;
    let mut cfg = RunConfig::new(KernelSpec::canonical(-1.5, 1.8).unwrap(), 1 << 14, t_end);
    cfg.snapshot_times = log_times(t_end, 8);
    let tr = run_with_snapshots(&cfg);
    let series = snapshot_series(&tr);
    let peak = series
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
        .map(|(i, _)| i)
        .unwrap();
    let monotone = series[peak..].windows(2).all(|w| w[1].2 <= w[0].2);
    let last = series.last().unwrap();
    let final_ind = last.2;
    let tail: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| p.0 >= t_end / 10.0)
        .map(|p| (p.0, p.1))
        .collect();
    let slope = powerlaw_fit(&tail, (t_end / 10.0, t_end))
        .map(|f| f.exponent)
        .unwrap_or(f64::NAN);
    let m0_start = series
        .iter()
        .find(|p| p.0 >= t_end / 10.0)
        .map(|p| p.3)
        .unwrap();
    let m0_change = (last.3 - m0_start).abs() / m0_start;
    let pass = monotone && final_ind <= 1.1 && (slope - 1.0).abs() <= 0.05 && m0_change <= 0.02;
    outcome(
        pass,
        format!(
            "indicator monotone after peak: {monotone}, final indicator {final_ind:.4} (need <= 1.1); \
             L slope over last decade {slope:.4} (need 1 ± 0.05); m0 change over last decade {:.2}% (need <= 2%)",
            100.0 * m0_change
        ),
    )
}

fn c8_dirac_log() -> Outcome {
    let t_end = 1e3;
    let mut cfg = RunConfig::new(KernelSpec::canonical(-1.0, 1.5).unwrap(), 1 << 14, t_end);
    cfg.snapshot_times = log_times(t_end, 8);
    let tr = run_with_snapshots(&cfg);
    let series = snapshot_series(&tr);
    let last_decade: Vec<_> = series.iter().filter(|p| p.0 >= t_end / 10.0).collect();
    let ratios: Vec<f64> = last_decade
        .iter()
        .map(|p| p.1 / (p.0 * p.0.ln().sqrt()))
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let band = ratios
        .iter()
        .map(|r| (r - mean).abs() / mean)
        .fold(0.0, f64::max);
    let ind: Vec<(f64, f64)> = last_decade.iter().map(|p| (p.0, p.2)).collect();
    let trend = ols_slope(&ind.iter().map(|p| (p.0.ln(), p.1)).collect::<Vec<_>>());
    let down = trend < 0.0 && ind.last().unwrap().1 < ind[0].1;
    outcome(
        band <= 0.25 && down,
        format!(
            "L/(t sqrt(ln t)) within ±{:.1}% of its mean {mean:.4}; indicator {:.4} -> {:.4}",
            100.0 * band,
            ind[0].1,
            ind.last().unwrap().1
        ),
    )
}

const LOGFLUX_T_END: f64 = 6e4;

fn c9_log_flux() -> Outcome {
    let t_end = LOGFLUX_T_END;
    let cfg = RunConfig::new(KernelSpec::canonical(-2.0, 1.8).unwrap(), 1 << 14, t_end);
    let tr = run_with_snapshots(&cfg);
    let series: Vec<(f64, f64)> = tr.moments.iter().map(|m| (m.t, m.m_gl)).collect();
    let increasing = series
        .windows(2)
        .filter(|w| w[0].0 >= 1.0)
        .all(|w| w[1].1 >= w[0].1);
    let fit = powerlaw_fit(&series, (t_end / 10.0, t_end));
    let q = logcorrected_moment_fit(&series);
    match (fit, q) {
        (Ok(f), Ok(q)) => outcome(
            increasing && f.exponent <= 0.05 && q.q > 0.0,
            format!(
                "m_gl increasing: {increasing}; final-decade exponent {:.4} (need <= 0.05); q = {:.3} ± {:.3}",
                f.exponent, q.q, q.stderr
            ),
        ),
        (f, q) => outcome(false, format!("fit failed: {f:?} {q:?}")),
    }
}

fn c10_profile() -> Outcome {
    let gl = -1.0;
    let prof = match profile_infty(gl, 400) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let xs = prof.xi_star;
    let mut weak: f64 = 0.0;
    for j in 1..=20 {
        let w = j as f64 * PI / (2.0 * xs);
        let r = prof
            .weak_residual(|x| (w * x).sin(), |x| w * (w * x).cos(), 1e-12)
            .unwrap();
        weak = weak.max(r.abs());
    }
    let norm = (prof.integrate(|_| 1.0, 1e-13).unwrap() - 1.0).abs();
    let small: Vec<(f64, f64)> = prof.samples.iter().copied().take(20).collect();
    let origin = powerlaw_fit(&small, (0.0, f64::INFINITY)).unwrap().exponent;
    let edge_pts: Vec<(f64, f64)> = prof
        .samples
        .iter()
        .map(|&(x, y)| (xs - x, y))
        .filter(|&(d, _)| d > 0.0 && d <= 1e-5 * xs)
        .collect();
    let edge = powerlaw_fit(&edge_pts, (0.0, f64::INFINITY))
        .map(|f| f.exponent)
        .unwrap_or(f64::NAN);
    let pass = weak <= 1e-6
        && norm <= 1e-8
        && (origin - 1.0).abs() <= 1e-3
        && (edge + 0.5).abs() <= 0.02;
    outcome(
        pass,
        format!(
            "weak residual {weak:.2e}; normalization error {norm:.2e}; origin exponent {origin:.5}; edge exponent {edge:.4}"
        ),
    )
}

fn c11_classifier() -> Outcome {
    let cases: [(f64, f64, Regime, f64, f64, Option<f64>); 5] = [
        (0.2, 0.2, Regime::StationarySubcritical, 2.5, 0.0, None),
        (-1.5, 1.8, Regime::DiracLinear, 1.0, 0.0, None),
        (-1.0, 1.5, Regime::DiracLog, 1.0, 0.5, None),
        (-2.0, 1.8, Regime::LogFlux, 1.0 / 1.2, -0.8 / 1.2, Some(1.0 / 1.2)),
        (-1.5, 1.25, Regime::CriticalConjecture, 2.0 / 2.5, 0.0, None),
    ];
    let mut bad = Vec::new();
    for (g, l, regime, power, log_power, flux) in cases {
        let r = classify(&KernelSpec::canonical(g, l).unwrap());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let flux_ok = match (r.length_law.flux_exponent, flux) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        let m0_ok = regime != Regime::DiracLinear || (r.m0_law.law.power == 0.0 && r.m0_law.law.log_power == 0.0);
        if r.regime != regime
            || !close(r.length_law.law.power, power)
            || !close(r.length_law.law.log_power, log_power)
            || !flux_ok
            || !m0_ok
            || r.conjectural != (regime == Regime::CriticalConjecture)
        {
            bad.push(format!("({g}, {l}) -> {:?}", r.regime));
        }
    }
    outcome(bad.is_empty(), format!("mismatches: {bad:?}"))
}

fn c12_stochastic() -> Outcome {
    let t_end = 5.0;
    let exact = constant_kernel_m0(t_end, 0.0, 1.0, 1.0).unwrap();
    let mut values = Vec::new();
    for seed in 0..16 {
        let cfg = StochasticConfig::new(KernelSpec::constant(), 1e4, t_end, seed);
        let tr = stochastic_run(&cfg).unwrap();
        values.push(tr.samples.last().unwrap().m0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z = (mean - exact).abs() / se;

    let mut cfg = StochasticConfig::new(KernelSpec::constant(), 1e4, t_end, 3);
    cfg.sample_times = vec![1.0, 2.0, 3.0, 4.0];
    let text = |cfg: &StochasticConfig| {
        let tr = stochastic_run(cfg).unwrap();
        let rows: Vec<MomentRow> = tr.samples.iter().map(MomentRow::from).collect();
        (moments_to_string(&rows).unwrap(), tr.final_counts, tr.events)
    };
    let identical = text(&cfg) == text(&cfg);
    outcome(
        z <= 3.0 && identical,
        format!(
            "mean m0 {mean:.5} vs {exact:.5}, |z| = {z:.2} (se {se:.2e}); repeat run byte-identical: {identical}"
        ),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "constant-kernel moment oracle", secs(10), c1_constant_kernel_m0),
        (2, "mass ledger", secs(120), c2_mass_ledger),
        (3, "rhs mode equivalence", secs(30), c3_rhs_equivalence),
        (4, "quasi-stationary asymptotic slope", secs(10), c4_quasistationary_slope),
        (5, "A-constant quadrature", secs(1), c5_a_constant),
        (6, "stationary-regime tail", secs(600), c6_stationary_tail),
        (7, "linear-law Dirac regime", secs(900), c7_dirac_linear),
        (8, "log-corrected Dirac regime", secs(900), c8_dirac_log),
        (9, "flux-limited regime", secs(1200), c9_log_flux),
        (10, "compact-support profile", secs(5), c10_profile),
        (11, "regime classifier", secs(1), c11_classifier),
        (12, "stochastic cross-check", secs(300), c12_stochastic),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (id, name, budget, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
