//! `coag`: command-line front end.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration or usage error,
//! 3 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coag_core::diagnostics::{
    characteristic_length, collapse_distance, logcorrected_moment_fit, powerlaw_fit,
    rescale_snapshot, standard_amplitude,
};
use coag_core::interface::csvio::{
    fmt_f64, read_moments, read_snapshot, snapshot_file_name, write_moments, write_snapshot,
    MomentRow,
};
use coag_core::interface::experiment::{run_experiment, ExperimentError, ExperimentOptions};
use coag_core::interface::manifest::{ExperimentManifest, Status};
use coag_core::interface::parse_stochastic_config;
use coag_core::kernel::{KernelSpec, Shape};
use coag_core::ode::StateVector;
use coag_core::oracle::stochastic_run;
use coag_core::quasistationary::{cn_asymptote, particle_flux, solve_recursion};
use coag_core::regimes::{classify, predicted_length, predicted_moments, Regime, RegimeReport};
use coag_core::selfsimilar::{dirac_a, dirac_b, profile_for_kernel};

#[derive(Debug)]
enum CliError {
    Io(String),
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

type CliResult = Result<(), CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numeric_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "coag", version, about = "Coagulation with injection: runs, regimes and diagnostics")]
struct Cli {
    /// Output file or directory (stdout when a file output is omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Emit JSON instead of text or CSV where both are available.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a configuration into an experiment directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the latest snapshot in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Classify the long-time regime of a kernel, or emit a phase map.
    Regime(RegimeArgs),
    /// Quasi-stationary inner solution.
    Qs(QsCommand),
    /// Self-similar profiles.
    Profile(ProfileCommand),
    /// Fits on saved snapshots and moment series.
    #[command(subcommand)]
    Fit(FitCommand),
    /// Stochastic reference simulations.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelKind {
    Canonical,
    Kmr,
    Constant,
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    #[arg(long, allow_hyphen_values = true)]
    gamma: f64,
    #[arg(long, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "canonical")]
    kernel: KernelKind,
}

impl KernelArgs {
    fn build(&self) -> Result<KernelSpec, CliError> {
        kernel(self.kernel, self.gamma, self.lambda)
    }
}

fn kernel(kind: KernelKind, gamma: f64, lambda: f64) -> Result<KernelSpec, CliError> {
    let shape = match kind {
        KernelKind::Canonical => Shape::CanonicalProduct,
        KernelKind::Kmr => Shape::Kmr,
        KernelKind::Constant => Shape::Constant,
    };
    KernelSpec::new(gamma, lambda, shape).map_err(config_err)
}

#[derive(Args, Debug)]
struct RegimeArgs {
    #[arg(long, allow_hyphen_values = true, required_unless_present = "grid")]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "grid")]
    lambda: Option<f64>,
    /// Also evaluate the predicted laws at this time.
    #[arg(long)]
    t: Option<f64>,
    /// Phase map `g0:g1:n,l0:l1:n` as CSV.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["gamma", "lambda", "t"])]
    grid: Option<String>,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
struct QsCommand {
    #[command(subcommand)]
    sub: Option<QsSub>,
    #[arg(long, allow_hyphen_values = true, required = true)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required = true)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "canonical")]
    kernel: KernelKind,
    /// Value of the moment `M_(gamma+lambda)`.
    #[arg(long, required = true)]
    m: Option<f64>,
    #[arg(long, required = true)]
    nmax: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum QsSub {
    /// Escape flux `J_c(M)` over `a:b:n`.
    Flux {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long = "m-range")]
        m_range: String,
    },
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
struct ProfileCommand {
    #[command(subcommand)]
    sub: Option<ProfileSub>,
    #[arg(long, allow_hyphen_values = true, required = true)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required = true)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "canonical")]
    kernel: KernelKind,
    #[arg(long, default_value_t = 400)]
    grid: usize,
}

#[derive(Subcommand, Debug)]
enum ProfileSub {
    /// Dirac profile location and weight.
    Dirac {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Limit of the cluster number, needed for `L = t`.
        #[arg(long)]
        m0: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum FitCommand {
    /// Power-law fit of `c_n` over a size window `a:b`.
    Powerlaw {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: String,
    },
    /// Pairwise collapse distances of snapshots rescaled by `L = m1/m0`.
    Collapse {
        #[arg(long = "in", value_delimiter = ',', required = true)]
        input: Vec<PathBuf>,
    },
    /// Logarithmic growth fit of `m_gl` in a moments file.
    Moments {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "log")]
        model: MomentModel,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MomentModel {
    Log,
    Power,
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Independent realizations, one directory per seed.
    Stochastic {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive seed range `a..b`, or a single seed.
        #[arg(long, default_value = "0")]
        seeds: String,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("range `{s}`: expected a:b:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
    let b = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
    let n = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    Ok((a, b, n))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Config(format!("window `{s}`: expected a:b"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a = a.trim().parse::<f64>().map_err(|_| bad())?;
    let b = b.trim().parse::<f64>().map_err(|_| bad())?;
    Ok((a, b))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("seeds `{s}`: expected a..b or a single integer"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a = a.trim().parse::<u64>().map_err(|_| bad())?;
            let b = b.trim().parse::<u64>().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse::<u64>().map_err(|_| bad())?]),
    }
}

/// Writes to `--out` (refusing to overwrite without `--force`) or stdout.
fn emit(cli: &Cli, text: &str) -> CliResult {
    match &cli.out {
        Some(p) => {
            if p.exists() && !cli.force {
                return Err(CliError::Config(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
            fs::write(p, text).map_err(io_err)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(io_err)?;
    s.push('\n');
    Ok(s)
}

fn cmd_run(cli: &Cli, config: &Path, resume: bool) -> CliResult {
    let text = fs::read_to_string(config).map_err(config_err)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| CliError::Config("run needs --out <dir>".into()))?;
    let opts = ExperimentOptions {
        force: cli.force,
        resume,
        ..Default::default()
    };
    match run_experiment(&text, out, &opts) {
        Ok(o) => {
            let summary = serde_json::json!({
                "dir": o.dir,
                "t": o.final_state.t,
                "resumed_from": o.resumed_from,
                "files": o.manifest.files.len(),
            });
            if cli.json {
                print!("{}", to_json(&summary)?);
            } else {
                println!(
                    "finished t = {} in {} ({} files)",
                    o.final_state.t,
                    o.dir.display(),
                    o.manifest.files.len()
                );
            }
            Ok(())
        }
        Err(e) if e.is_config() => Err(config_err(e)),
        Err(e @ ExperimentError::Exists(_)) | Err(e @ ExperimentError::Resume(_)) => {
            Err(config_err(e))
        }
        Err(e @ ExperimentError::Ode(_)) => Err(numeric_err(e)),
        Err(e) => Err(io_err(e)),
    }
}

fn regime_text(r: &RegimeReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "regime: {}", r.regime.name());
    let _ = writeln!(s, "gamma: {}", r.gamma);
    let _ = writeln!(s, "lambda: {}", r.lambda);
    match r.length_law.flux_exponent {
        Some(e) => {
            let _ = writeln!(s, "length: (t / M_gl)^{e} ~ {}", r.length_law.law);
        }
        None => {
            let _ = writeln!(s, "length: {}", r.length_law.law);
        }
    }
    let _ = writeln!(s, "m0: {} ({:?})", r.m0_law.law, r.m0_law.behavior);
    let _ = writeln!(s, "m_gl: {} ({:?})", r.mgl_law.law, r.mgl_law.behavior);
    let _ = writeln!(s, "profile: {:?}", r.profile);
    let _ = writeln!(s, "conjectural: {}", r.conjectural);
    for c in &r.origin_candidates {
        let _ = writeln!(s, "origin: {} -> {} (log power {})", c.condition, c.power, c.log_power);
    }
    s
}

fn cmd_regime(cli: &Cli, a: &RegimeArgs) -> CliResult {
    if let Some(grid) = &a.grid {
        let (gs, ls) = grid
            .split_once(',')
            .ok_or_else(|| CliError::Config(format!("grid `{grid}`: expected g0:g1:n,l0:l1:n")))?;
        let (g0, g1, gn) = parse_range(gs)?;
        let (l0, l1, ln) = parse_range(ls)?;
        let mut out = String::from("gamma,lambda,regime\n");
        for g in linspace(g0, g1, gn) {
            for l in linspace(l0, l1, ln) {
                let name = match KernelSpec::canonical(g, l) {
                    Ok(k) => classify(&k).regime.name(),
                    Err(_) => "invalid",
                };
                let _ = writeln!(out, "{},{},{}", fmt_f64(g), fmt_f64(l), name);
            }
        }
        return emit(cli, &out);
    }
    let (g, l) = (a.gamma.unwrap_or_default(), a.lambda.unwrap_or_default());
    let k = KernelSpec::canonical(g, l).map_err(config_err)?;
    let r = classify(&k);
    let at_t = match a.t {
        Some(t) => {
            let len = predicted_length(&r, t, None).ok();
            let (m0, mgl) = predicted_moments(&r, t).map_err(config_err)?;
            Some((t, len, m0, mgl))
        }
        None => None,
    };
    if cli.json {
        let mut v = serde_json::to_value(&r).map_err(io_err)?;
        if let Some((t, len, m0, mgl)) = at_t {
            v["at"] = serde_json::json!({ "t": t, "length": len, "m0": m0, "m_gl": mgl });
        }
        emit(cli, &to_json(&v)?)
    } else {
        let mut s = regime_text(&r);
        if let Some((t, len, m0, mgl)) = at_t {
            match len {
                Some(v) => {
                    let _ = writeln!(s, "length({t}): {v}");
                }
                None => {
                    let _ = writeln!(s, "length({t}): needs M_gl");
                }
            }
            let _ = writeln!(s, "m0({t}): {m0}");
            let _ = writeln!(s, "m_gl({t}): {mgl}");
        }
        emit(cli, &s)
    }
}

fn cmd_qs(cli: &Cli, q: &QsCommand) -> CliResult {
    match &q.sub {
        Some(QsSub::Flux { kernel, m_range }) => {
            let k = kernel.build()?;
            let (a, b, n) = parse_range(m_range)?;
            let mut out = String::from("m,log_flux,flux\n");
            for m in linspace(a, b, n) {
                let f = particle_flux(&k, m).map_err(numeric_err)?;
                let _ = writeln!(out, "{},{},{}", fmt_f64(m), fmt_f64(f.log_value), fmt_f64(f.value));
            }
            emit(cli, &out)
        }
        None => {
            let (Some(g), Some(l), Some(m), Some(nmax)) = (q.gamma, q.lambda, q.m, q.nmax) else {
                return Err(CliError::Config("qs needs --gamma, --lambda, --m and --nmax".into()));
            };
            let k = kernel(q.kernel, g, l)?;
            let sol = solve_recursion(&k, m, nmax).map_err(numeric_err)?;
            let mut out = String::from("n,log_c_recursion,log_c_asymptote\n");
            for n in 1..=sol.len() {
                let asym = cn_asymptote(&k, m, n as f64)
                    .map(|a| a.log_value)
                    .unwrap_or(f64::NAN);
                let _ = writeln!(out, "{n},{},{}", fmt_f64(sol.log_c(n)), fmt_f64(asym));
            }
            emit(cli, &out)
        }
    }
}

fn cmd_profile(cli: &Cli, p: &ProfileCommand) -> CliResult {
    match &p.sub {
        Some(ProfileSub::Dirac { kernel, m0 }) => {
            let k = kernel.build()?;
            let params = match (classify(&k).regime, m0) {
                (Regime::DiracLog, _) => dirac_a(&k).map_err(numeric_err)?,
                (Regime::DiracLinear, Some(m)) => dirac_b(*m).map_err(config_err)?,
                (Regime::DiracLinear, None) => {
                    return Err(CliError::Config("this regime needs --m0".into()))
                }
                (other, _) => {
                    return Err(CliError::Config(format!(
                        "{} has no Dirac profile",
                        other.name()
                    )))
                }
            };
            if cli.json {
                emit(cli, &to_json(&params)?)
            } else {
                emit(
                    cli,
                    &format!(
                        "location,weight,law\n{},{},{:?}\n",
                        fmt_f64(params.location),
                        fmt_f64(params.weight),
                        params.law
                    ),
                )
            }
        }
        None => {
            let (Some(g), Some(l)) = (p.gamma, p.lambda) else {
                return Err(CliError::Config("profile needs --gamma and --lambda".into()));
            };
            let k = kernel(p.kernel, g, l)?;
            let prof = profile_for_kernel(&k, p.grid).map_err(config_err)?;
            let mut out = String::from("xi,phi\n");
            for (x, y) in &prof.samples {
                let _ = writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*y));
            }
            emit(cli, &out)
        }
    }
}

fn load_snapshot(p: &Path) -> Result<StateVector, CliError> {
    read_snapshot(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn cmd_fit(cli: &Cli, f: &FitCommand) -> CliResult {
    match f {
        FitCommand::Powerlaw { input, window } => {
            let s = load_snapshot(input)?;
            let pts: Vec<(f64, f64)> = s
                .c
                .iter()
                .enumerate()
                .map(|(i, &c)| ((i + 1) as f64, c))
                .collect();
            let fit = powerlaw_fit(&pts, parse_window(window)?).map_err(numeric_err)?;
            if cli.json {
                emit(cli, &to_json(&fit)?)
            } else {
                emit(
                    cli,
                    &format!(
                        "exponent,stderr,intercept,points\n{},{},{},{}\n",
                        fmt_f64(fit.exponent),
                        fmt_f64(fit.stderr),
                        fmt_f64(fit.intercept),
                        fit.points
                    ),
                )
            }
        }
        FitCommand::Collapse { input } => {
            let mut rescaled = Vec::new();
            for p in input {
                let s = load_snapshot(p)?;
                let l = characteristic_length(&s).map_err(numeric_err)?;
                rescaled.push(
                    rescale_snapshot(&s.c, l, s.t, standard_amplitude(s.t, l))
                        .map_err(numeric_err)?,
                );
            }
            let mut rows = Vec::new();
            for i in 0..rescaled.len() {
                for j in i + 1..rescaled.len() {
                    let d = collapse_distance(&rescaled[i], &rescaled[j]).map_err(numeric_err)?;
                    rows.push((rescaled[i].t, rescaled[j].t, d));
                }
            }
            if cli.json {
                let v: Vec<_> = rows
                    .iter()
                    .map(|(a, b, d)| serde_json::json!({"t_a": a, "t_b": b, "distance": d}))
                    .collect();
                emit(cli, &to_json(&v)?)
            } else {
                let mut out = String::from("t_a,t_b,distance\n");
                for (a, b, d) in rows {
                    let _ = writeln!(out, "{},{},{}", fmt_f64(a), fmt_f64(b), fmt_f64(d));
                }
                emit(cli, &out)
            }
        }
        FitCommand::Moments { input, model } => {
            let rows = read_moments(input)
                .map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
            let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.m_gl)).collect();
            let v = match model {
                MomentModel::Log => {
                    serde_json::to_value(logcorrected_moment_fit(&series).map_err(numeric_err)?)
                }
                MomentModel::Power => {
                    let t_end = series.last().map(|p| p.0).unwrap_or(0.0);
                    serde_json::to_value(
                        powerlaw_fit(&series, (t_end / 10.0, t_end)).map_err(numeric_err)?,
                    )
                }
            }
            .map_err(io_err)?;
            emit(cli, &to_json(&v)?)
        }
    }
}

fn cmd_oracle(cli: &Cli, o: &OracleCommand) -> CliResult {
    let OracleCommand::Stochastic { config, seeds } = o;
    let text = fs::read_to_string(config).map_err(config_err)?;
    let (base, n_bins) = parse_stochastic_config(&text).map_err(config_err)?;
    let seeds = parse_seeds(seeds)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| CliError::Config("oracle stochastic needs --out <dir>".into()))?;
    for seed in seeds {
        let dir = out.join(format!("seed_{seed}"));
        if dir.exists() {
            if !cli.force {
                return Err(CliError::Config(format!(
                    "{} exists; pass --force to overwrite",
                    dir.display()
                )));
            }
            fs::remove_dir_all(&dir).map_err(io_err)?;
        }
        fs::create_dir_all(&dir).map_err(io_err)?;
        let mut manifest = ExperimentManifest::begin(&format!("{text}# seed = {seed}\n"));
        manifest.write(&dir).map_err(io_err)?;
        let mut cfg = base.clone();
        cfg.seed = seed;
        let traj = match stochastic_run(&cfg) {
            Ok(t) => t,
            Err(e) => {
                manifest.finish(Status::Incomplete, Some(e.to_string()));
                manifest.write(&dir).map_err(io_err)?;
                return Err(numeric_err(e));
            }
        };
        let mut files = Vec::new();
        for (rec, counts) in traj.samples.iter().zip(&traj.sample_counts) {
            let mut c = vec![0.0; n_bins];
            for &(size, count) in counts {
                if (size as usize) <= n_bins {
                    c[size as usize - 1] = count as f64 / cfg.volume;
                }
            }
            let state = StateVector {
                c,
                t: rec.t,
                leaked_mass: 0.0,
                leaked_number: 0.0,
            };
            let name = snapshot_file_name(rec.t);
            write_snapshot(&dir.join(&name), &state).map_err(io_err)?;
            files.push(name);
        }
        let rows: Vec<MomentRow> = traj.samples.iter().map(MomentRow::from).collect();
        write_moments(&dir.join("moments.csv"), &rows).map_err(io_err)?;
        files.push("moments.csv".into());
        manifest.record_files(&dir, &files).map_err(io_err)?;
        manifest.finish(Status::Complete, None);
        manifest.write(&dir).map_err(io_err)?;
        if !cli.json {
            println!("seed {seed}: {} events, m0(t_end) = {}", traj.events, rows.last().map(|r| r.m0).unwrap_or(0.0));
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Run { config, resume } => cmd_run(cli, config, *resume),
        Command::Regime(a) => cmd_regime(cli, a),
        Command::Qs(q) => cmd_qs(cli, q),
        Command::Profile(p) => cmd_profile(cli, p),
        Command::Fit(f) => cmd_fit(cli, f),
        Command::Oracle(o) => cmd_oracle(cli, o),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coag: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
