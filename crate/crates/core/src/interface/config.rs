//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! kernel = canonical      # constant | canonical | kmr
//! gamma = -1.5
//! lambda = 1.8
//! n_bins = 4096
//! t_end = 50
//! rel_tol = 1e-8          # default
//! abs_tol = 1e-14         # default
//! snapshots = 10, 20, 50  # default: none
//! rhs_mode = separable    # default: separable when the kernel allows it, else generic
//! source = 1:1.0          # default; `none` for no injection
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::kernel::{KernelSpec, Shape};
use crate::ode::{RhsMode, RunConfig, SourceSpec};
use crate::oracle::StochasticConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigErrorKind {
    Malformed(String),
    UnknownKey(String),
    DuplicateKey(String),
    TypeMismatch {
        key: String,
        value: String,
        expected: &'static str,
    },
    Missing(&'static str),
    Invalid(String),
}

impl fmt::Display for ConfigErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Malformed(l) => write!(f, "malformed line `{l}`, expected `key = value`"),
            Self::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            Self::DuplicateKey(k) => write!(f, "key `{k}` given twice"),
            Self::TypeMismatch {
                key,
                value,
                expected,
            } => write!(f, "`{key} = {value}`: expected {expected}"),
            Self::Missing(k) => write!(f, "missing required key `{k}`"),
            Self::Invalid(m) => write!(f, "{m}"),
        }
    }
}

/// Configuration error; `line` is 1-based and 0 when no single line is at fault.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: usize,
    pub kind: ConfigErrorKind,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

fn err(line: usize, kind: ConfigErrorKind) -> ConfigError {
    ConfigError { line, kind }
}

const RUN_KEYS: &[&str] = &[
    "abs_tol", "gamma", "kernel", "lambda", "n_bins", "rel_tol", "rhs_mode", "snapshots",
    "source", "t_end",
];

const STOCHASTIC_EXTRA: &[&str] = &["volume", "seed"];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn parse(text: &str, allowed: &[&str]) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| err(line, ConfigErrorKind::Malformed(body.to_string())))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(err(line, ConfigErrorKind::Malformed(body.to_string())));
            }
            if !allowed.contains(&k) {
                return Err(err(line, ConfigErrorKind::UnknownKey(k.to_string())));
            }
            if map
                .insert(k.to_string(), (line, v.trim().to_string()))
                .is_some()
            {
                return Err(err(line, ConfigErrorKind::DuplicateKey(k.to_string())));
            }
        }
        Ok(Self(map))
    }

    fn raw(&self, key: &'static str) -> Result<(usize, &str), ConfigError> {
        self.0
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| err(0, ConfigErrorKind::Missing(key)))
    }

    fn opt(&self, key: &'static str) -> Option<(usize, &str)> {
        self.0.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn float(&self, key: &'static str) -> Result<(usize, f64), ConfigError> {
        let (line, v) = self.raw(key)?;
        Ok((line, parse_float(line, key, v)?))
    }

    fn opt_float(&self, key: &'static str, default: f64) -> Result<(usize, f64), ConfigError> {
        match self.opt(key) {
            Some((line, v)) => Ok((line, parse_float(line, key, v)?)),
            None => Ok((0, default)),
        }
    }

    fn int(&self, key: &'static str) -> Result<(usize, usize), ConfigError> {
        let (line, v) = self.raw(key)?;
        let n = v.parse::<usize>().map_err(|_| mismatch(line, key, v, "a nonnegative integer"))?;
        Ok((line, n))
    }
}

fn mismatch(line: usize, key: &str, value: &str, expected: &'static str) -> ConfigError {
    err(
        line,
        ConfigErrorKind::TypeMismatch {
            key: key.to_string(),
            value: value.to_string(),
            expected,
        },
    )
}

fn parse_float(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(mismatch(line, key, v, "a finite number")),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| parse_float(line, key, s.trim()))
        .collect()
}

fn parse_source(line: usize, v: &str) -> Result<SourceSpec, ConfigError> {
    if v == "none" {
        return Ok(SourceSpec::none());
    }
    let mut entries = Vec::new();
    for part in v.split(',') {
        let (n, r) = part
            .split_once(':')
            .ok_or_else(|| mismatch(line, "source", v, "entries `size:rate`"))?;
        let n = n
            .trim()
            .parse::<usize>()
            .map_err(|_| mismatch(line, "source", v, "integer sizes"))?;
        let r = parse_float(line, "source", r.trim())?;
        entries.push((n, r));
    }
    SourceSpec::new(entries).map_err(|e| err(line, ConfigErrorKind::Invalid(e.to_string())))
}

fn kernel_from(e: &Entries) -> Result<KernelSpec, ConfigError> {
    let (kline, kname) = e.raw("kernel")?;
    let (_, gamma) = e.float("gamma")?;
    let (_, lambda) = e.float("lambda")?;
    let shape = match kname {
        "constant" => Shape::Constant,
        "canonical" => Shape::CanonicalProduct,
        "kmr" => Shape::Kmr,
        "custom" => {
            return Err(err(
                kline,
                ConfigErrorKind::Invalid(
                    "custom shapes need a shape function and are only available through the library"
                        .into(),
                ),
            ))
        }
        other => return Err(mismatch(kline, "kernel", other, "constant, canonical or kmr")),
    };
    KernelSpec::new(gamma, lambda, shape)
        .map_err(|e| err(kline, ConfigErrorKind::Invalid(e.to_string())))
}

/// Parses a run configuration, filling documented defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = Entries::parse(text, RUN_KEYS)?;
    run_config_from(&e)
}

fn run_config_from(e: &Entries) -> Result<RunConfig, ConfigError> {
    let kernel = kernel_from(e)?;
    let (nline, n_bins) = e.int("n_bins")?;
    let (tline, t_end) = e.float("t_end")?;
    let mut cfg = RunConfig::new(kernel, n_bins, t_end);
    let (rl, rel) = e.opt_float("rel_tol", cfg.rel_tol)?;
    let (al, abs) = e.opt_float("abs_tol", cfg.abs_tol)?;
    cfg.rel_tol = rel;
    cfg.abs_tol = abs;
    let mut sline = 0;
    if let Some((line, v)) = e.opt("snapshots") {
        cfg.snapshot_times = parse_list(line, "snapshots", v)?;
        sline = line;
    }
    let mut srcline = 0;
    if let Some((line, v)) = e.opt("source") {
        cfg.source = parse_source(line, v)?;
        srcline = line;
    }
    let mut mline = 0;
    if let Some((line, v)) = e.opt("rhs_mode") {
        cfg.rhs_mode = match v {
            "generic" => RhsMode::Generic,
            "separable" => RhsMode::SeparableFast,
            _ => return Err(mismatch(line, "rhs_mode", v, "generic or separable")),
        };
        mline = line;
    }
    cfg.validate().map_err(|ode| {
        let msg = ode.to_string();
        let line = if msg.contains("rel_tol") {
            rl
        } else if msg.contains("abs_tol") {
            al
        } else if msg.contains("n_bins") {
            nline.max(srcline)
        } else if msg.contains("t_end") {
            tline
        } else if msg.contains("snapshot") {
            sline
        } else if msg.contains("separable") {
            mline
        } else {
            0
        };
        err(line, ConfigErrorKind::Invalid(msg))
    })?;
    Ok(cfg)
}

fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

fn source_text(s: &SourceSpec) -> String {
    if s.entries().is_empty() {
        return "none".into();
    }
    s.entries()
        .iter()
        .map(|(n, r)| format!("{n}:{}", fmt_float(*r)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Normalized text: every key present, keys sorted, round-trip float formatting.
/// Kernel prefactors and custom shapes are not representable.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("abs_tol", fmt_float(cfg.abs_tol));
    push("gamma", fmt_float(cfg.kernel.gamma()));
    push("kernel", cfg.kernel.shape().name().to_string());
    push("lambda", fmt_float(cfg.kernel.lambda()));
    push("n_bins", cfg.n_bins.to_string());
    push("rel_tol", fmt_float(cfg.rel_tol));
    push(
        "rhs_mode",
        match cfg.rhs_mode {
            RhsMode::Generic => "generic",
            RhsMode::SeparableFast => "separable",
        }
        .to_string(),
    );
    push(
        "snapshots",
        cfg.snapshot_times
            .iter()
            .map(|t| fmt_float(*t))
            .collect::<Vec<_>>()
            .join(","),
    );
    push("source", source_text(&cfg.source));
    push("t_end", fmt_float(cfg.t_end));
    out
}

/// Stochastic-oracle configuration: the run keys plus `volume` and `seed`.
/// `n_bins` bounds the exported concentration table; `rel_tol`, `abs_tol` and
/// `rhs_mode` are accepted and ignored so that run configurations can be reused.
pub fn parse_stochastic_config(text: &str) -> Result<(StochasticConfig, usize), ConfigError> {
    let allowed: Vec<&str> = RUN_KEYS.iter().chain(STOCHASTIC_EXTRA).copied().collect();
    let e = Entries::parse(text, &allowed)?;
    let kernel = kernel_from(&e)?;
    let (_, volume) = e.float("volume")?;
    let (tline, t_end) = e.float("t_end")?;
    let seed = match e.opt("seed") {
        Some((line, v)) => v
            .parse::<u64>()
            .map_err(|_| mismatch(line, "seed", v, "a nonnegative integer"))?,
        None => 0,
    };
    let n_bins = match e.opt("n_bins") {
        Some(_) => e.int("n_bins")?.1,
        None => 1024,
    };
    let mut cfg = StochasticConfig::new(kernel, volume, t_end, seed);
    if let Some((line, v)) = e.opt("snapshots") {
        cfg.sample_times = parse_list(line, "snapshots", v)?;
    }
    if let Some((line, v)) = e.opt("source") {
        cfg.source = parse_source(line, v)?;
    }
    if !(volume > 0.0) {
        let (line, _) = e.raw("volume")?;
        return Err(err(line, ConfigErrorKind::Invalid(format!("volume = {volume} must be positive"))));
    }
    if !(t_end >= 0.0) {
        return Err(err(tline, ConfigErrorKind::Invalid(format!("t_end = {t_end}"))));
    }
    Ok((cfg, n_bins))
}
