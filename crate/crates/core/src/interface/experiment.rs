//! One output directory per run: snapshots, `moments.csv` and a manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::{parse_config, serialize_config, ConfigError};
use super::csvio::{
    self, read_moments, read_snapshot, snapshot_file_name, write_moments, write_snapshot, CsvError,
    MomentRow,
};
use super::manifest::{ExperimentManifest, ManifestError, Status, MANIFEST_NAME};
use crate::ode::{integrate_with, IntegratorOptions, MomentRecord, OdeError, RunConfig, StateVector};

pub const MOMENTS_NAME: &str = "moments.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("{0}")]
    Csv(#[from] CsvError),
    #[error("{0}")]
    Manifest(#[from] ManifestError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{0} already holds results; pass force to overwrite")]
    Exists(PathBuf),
    #[error("cannot resume: {0}")]
    Resume(String),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Ode(OdeError::Config(_)) | Self::Ode(OdeError::Source(_)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    /// Overwrite earlier results in the directory.
    pub force: bool,
    /// Continue from the latest snapshot of an earlier run with the same configuration.
    pub resume: bool,
    pub integrator: IntegratorOptions,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
    pub final_state: StateVector,
    /// Time the integration started from (0 unless resumed).
    pub resumed_from: f64,
}

fn is_output(name: &str) -> bool {
    name == MANIFEST_NAME
        || name == MOMENTS_NAME
        || (name.starts_with("snapshot_") && name.ends_with(".csv"))
}

fn output_names(dir: &Path) -> Result<Vec<String>, io::Error> {
    let mut names = Vec::new();
    for e in fs::read_dir(dir)? {
        let name = e?.file_name().to_string_lossy().into_owned();
        if is_output(&name) {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn snapshot_names(dir: &Path) -> Result<Vec<String>, io::Error> {
    Ok(output_names(dir)?
        .into_iter()
        .filter(|n| n.starts_with("snapshot_"))
        .collect())
}

fn rows(records: &[MomentRecord]) -> Vec<MomentRow> {
    records.iter().map(MomentRow::from).collect()
}

struct ResumePoint {
    state: StateVector,
    history: Vec<MomentRow>,
}

fn resume_point(dir: &Path, cfg: &RunConfig) -> Result<ResumePoint, ExperimentError> {
    let old = ExperimentManifest::read(dir)?;
    let old_cfg = parse_config(&old.config)?;
    if serialize_config(&old_cfg) != serialize_config(cfg) {
        return Err(ExperimentError::Resume(
            "the configuration differs from the one in the manifest".into(),
        ));
    }
    old.verify(dir)?;
    let mut latest: Option<StateVector> = None;
    for name in snapshot_names(dir)? {
        if !old.files.iter().any(|f| f.name == name) {
            continue;
        }
        let s = read_snapshot(&dir.join(&name))?;
        if latest.as_ref().map_or(true, |l| s.t > l.t) {
            latest = Some(s);
        }
    }
    let state = latest.ok_or_else(|| ExperimentError::Resume("no snapshot to resume from".into()))?;
    if state.n_bins() != cfg.n_bins {
        return Err(ExperimentError::Resume(format!(
            "snapshot has {} bins, config has {}",
            state.n_bins(),
            cfg.n_bins
        )));
    }
    let history = if dir.join(MOMENTS_NAME).exists() {
        read_moments(&dir.join(MOMENTS_NAME))?
            .into_iter()
            .filter(|r| r.t < state.t)
            .collect()
    } else {
        Vec::new()
    };
    Ok(ResumePoint { state, history })
}

/// Runs `config_text` into `dir`.
///
/// The manifest is written first with status `incomplete` and rewritten after
/// every snapshot, so an interrupted run leaves a consistent, resumable directory.
/// Errors after the directory is prepared are recorded in the manifest before
/// being returned.
pub fn run_experiment(
    config_text: &str,
    dir: &Path,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutcome, ExperimentError> {
    let cfg = parse_config(config_text)?;
    cfg.validate()?;
    fs::create_dir_all(dir)?;

    let existing = output_names(dir)?;
    let resume = if opts.resume && !existing.is_empty() {
        Some(resume_point(dir, &cfg)?)
    } else {
        if !existing.is_empty() {
            if !opts.force {
                return Err(ExperimentError::Exists(dir.to_path_buf()));
            }
            for name in &existing {
                fs::remove_file(dir.join(name))?;
            }
        }
        None
    };

    let mut manifest = ExperimentManifest::begin(config_text);
    let (initial, history) = match resume {
        Some(r) => (r.state, r.history),
        None => (StateVector::empty(cfg.n_bins), Vec::new()),
    };
    let resumed_from = initial.t;
    if resumed_from > 0.0 {
        // older snapshots stay valid; later ones belong to the aborted attempt
        for name in snapshot_names(dir)? {
            let s = read_snapshot(&dir.join(&name))?;
            if s.t > resumed_from {
                fs::remove_file(dir.join(&name))?;
            }
        }
    }
    let mut written: Vec<String> = snapshot_names(dir)?;
    if !history.is_empty() {
        write_moments(&dir.join(MOMENTS_NAME), &history)?;
        written.push(MOMENTS_NAME.into());
    }
    manifest.record_files(dir, &written)?;
    manifest.write(dir)?;

    let mut io_failure: Option<ExperimentError> = None;
    let mut on_snapshot = |s: &StateVector, moments: &[MomentRecord]| {
        if io_failure.is_some() {
            return;
        }
        let mut step = || -> Result<(), ExperimentError> {
            let name = snapshot_file_name(s.t);
            write_snapshot(&dir.join(&name), s)?;
            if !written.contains(&name) {
                written.push(name);
            }
            let mut all = history.clone();
            all.extend(rows(moments));
            write_moments(&dir.join(MOMENTS_NAME), &all)?;
            if !written.iter().any(|n| n == MOMENTS_NAME) {
                written.push(MOMENTS_NAME.into());
            }
            manifest.record_files(dir, &written)?;
            manifest.write(dir)?;
            Ok(())
        };
        if let Err(e) = step() {
            io_failure = Some(e);
        }
    };
    let result = integrate_with(&cfg, &initial, &opts.integrator, &mut on_snapshot);

    let outcome = match (result, io_failure) {
        (_, Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
        (Ok(traj), None) => {
            let mut all = history;
            all.extend(rows(&traj.moments));
            write_moments(&dir.join(MOMENTS_NAME), &all)
                .map(|_| traj.final_state)
                .map_err(ExperimentError::from)
        }
    };
    match outcome {
        Ok(final_state) => {
            if !written.iter().any(|n| n == MOMENTS_NAME) {
                written.push(MOMENTS_NAME.into());
            }
            manifest.record_files(dir, &written)?;
            manifest.finish(Status::Complete, None);
            manifest.write(dir)?;
            Ok(ExperimentOutcome {
                dir: dir.to_path_buf(),
                manifest,
                final_state,
                resumed_from,
            })
        }
        Err(e) => {
            let _ = manifest.record_files(dir, &written);
            manifest.finish(Status::Incomplete, Some(e.to_string()));
            let _ = manifest.write(dir);
            Err(e)
        }
    }
}

/// Reads every snapshot listed in a finished directory, sorted by time.
pub fn load_snapshots(dir: &Path) -> Result<Vec<StateVector>, ExperimentError> {
    let mut out = snapshot_names(dir)?
        .into_iter()
        .map(|n| csvio::read_snapshot(&dir.join(n)))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = "kernel = constant\ngamma = 0\nlambda = 0\nn_bins = 64\nt_end = 2\nsnapshots = 1, 2\n";

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ExperimentOptions::default();
        run_experiment(CFG, dir.path(), &opts).unwrap();
        assert!(matches!(
            run_experiment(CFG, dir.path(), &opts),
            Err(ExperimentError::Exists(_))
        ));
        let forced = ExperimentOptions {
            force: true,
            ..Default::default()
        };
        let out = run_experiment(CFG, dir.path(), &forced).unwrap();
        assert_eq!(out.manifest.status, Status::Complete);
        assert_eq!(out.manifest.files.len(), 3);
        out.manifest.verify(dir.path()).unwrap();
    }

    #[test]
    fn config_errors_touch_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("x");
        let e = run_experiment("kernel = nope\n", &sub, &ExperimentOptions::default()).unwrap_err();
        assert!(e.is_config());
        assert!(!sub.exists());
    }
}
