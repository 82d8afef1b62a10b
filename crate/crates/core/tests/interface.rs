use std::fs;

use coag_core::interface::csvio::{
    moments_from_str, moments_to_string, read_moments, snapshot_from_str, snapshot_to_string,
};
use coag_core::interface::experiment::{load_snapshots, MOMENTS_NAME};
use coag_core::interface::{
    parse_config, run_experiment, serialize_config, ConfigErrorKind, CsvError, ExperimentError,
    ExperimentManifest, ExperimentOptions, MomentRow, Status,
};
use coag_core::ode::{IntegratorOptions, RhsMode, SourceSpec};
use coag_core::StateVector;
use proptest::prelude::*;

const MINIMAL: &str = "kernel = constant\ngamma = 0\nlambda = 0\nn_bins = 64\nt_end = 2\n";
const LEAKY: &str = "kernel = canonical\ngamma = -0.5\nlambda = 0.6\nn_bins = 48\nt_end = 8\nsnapshots = 1, 2, 3, 4, 5, 6, 7, 8\n";

fn capped(max_steps: usize) -> ExperimentOptions {
    ExperimentOptions {
        integrator: IntegratorOptions {
            max_steps,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn minimal_config_defaults() {
    let c = parse_config(MINIMAL).unwrap();
    assert_eq!((c.n_bins, c.t_end), (64, 2.0));
    assert_eq!((c.rel_tol, c.abs_tol), (1e-8, 1e-14));
    assert_eq!(c.rhs_mode, RhsMode::SeparableFast);
    assert_eq!(c.source, SourceSpec::monomer());
    assert!(c.snapshot_times.is_empty());
}

#[test]
fn type_mismatch_names_its_line() {
    let e = parse_config("# header\nkernel = constant\ngamma = abc\nlambda = 0\n").unwrap_err();
    assert_eq!(e.line, 3);
    match &e.kind {
        ConfigErrorKind::TypeMismatch { key, value, .. } => assert_eq!((key.as_str(), value.as_str()), ("gamma", "abc")),
        k => panic!("{k:?}"),
    }
    assert!(e.to_string().starts_with("line 3"));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = format!("{MINIMAL}snapshots = 0.5, 1, 2\n");
    run_experiment(&cfg, &a, &ExperimentOptions::default()).unwrap();
    run_experiment(&cfg, &b, &ExperimentOptions::default()).unwrap();
    let moments = |d: &std::path::Path| fs::read(d.join(MOMENTS_NAME)).unwrap();
    assert_eq!(moments(&a), moments(&b));
    let ma = ExperimentManifest::read(&a).unwrap();
    let mb = ExperimentManifest::read(&b).unwrap();
    let hashes = |m: &ExperimentManifest| m.files.iter().map(|f| (f.name.clone(), f.sha256.clone())).collect::<Vec<_>>();
    assert_eq!(hashes(&ma), hashes(&mb));
    assert_eq!(ma.status, Status::Complete);
    ma.verify(&a).unwrap();
    assert_eq!(load_snapshots(&a).unwrap().len(), 3);
}

#[test]
fn aborted_run_is_marked_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(LEAKY, dir.path(), &capped(5)).unwrap_err();
    assert!(!err.is_config());
    let m = ExperimentManifest::read(dir.path()).unwrap();
    assert_eq!(m.status, Status::Incomplete);
    assert!(m.message.as_deref().is_some_and(|s| !s.is_empty()));
    m.verify(dir.path()).unwrap();
}

#[test]
fn resume_keeps_the_ledger_continuous() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run");
    let mut aborted_at = None;
    for cap in [40, 80, 160, 320] {
        let _ = fs::remove_dir_all(&path);
        if run_experiment(LEAKY, &path, &capped(cap)).is_err() && !load_snapshots(&path).unwrap().is_empty() {
            aborted_at = Some(load_snapshots(&path).unwrap().last().unwrap().t);
            break;
        }
    }
    let aborted_at = aborted_at.expect("some step cap aborts after the first snapshot");
    assert!(aborted_at < 8.0);

    let resume = ExperimentOptions {
        resume: true,
        ..Default::default()
    };
    let out = run_experiment(LEAKY, &path, &resume).unwrap();
    assert_eq!(out.resumed_from, aborted_at);
    assert_eq!(out.manifest.status, Status::Complete);
    ExperimentManifest::read(&path).unwrap().verify(&path).unwrap();

    let rows = read_moments(&path.join(MOMENTS_NAME)).unwrap();
    assert!(rows.windows(2).all(|w| w[0].t < w[1].t));
    assert_eq!(rows.last().unwrap().t, 8.0);
    for r in &rows {
        assert!((r.m1 + r.leaked_mass - r.t).abs() <= 1e-6 * r.t.max(1.0), "t = {}", r.t);
    }
    assert!(rows.windows(2).all(|w| w[1].leaked_mass >= w[0].leaked_mass));
    assert_eq!(load_snapshots(&path).unwrap().len(), 8);

    let fresh = run_experiment(LEAKY, &dir.path().join("fresh"), &ExperimentOptions::default()).unwrap();
    let a = &out.final_state;
    let b = &fresh.final_state;
    for (x, y) in a.c.iter().zip(&b.c) {
        assert!((x - y).abs() <= 1e-6 * y.abs() + 1e-14);
    }
}

#[test]
fn resume_rejects_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{MINIMAL}snapshots = 1, 2\n");
    run_experiment(&cfg, dir.path(), &ExperimentOptions::default()).unwrap();
    let other = cfg.replace("t_end = 2", "t_end = 3");
    let opts = ExperimentOptions {
        resume: true,
        ..Default::default()
    };
    assert!(matches!(run_experiment(&other, dir.path(), &opts), Err(ExperimentError::Resume(_))));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(MINIMAL, dir.path(), &ExperimentOptions::default()).unwrap();
    let before = fs::read(dir.path().join(MOMENTS_NAME)).unwrap();
    assert!(matches!(
        run_experiment(MINIMAL, dir.path(), &ExperimentOptions::default()),
        Err(ExperimentError::Exists(_))
    ));
    assert_eq!(fs::read(dir.path().join(MOMENTS_NAME)).unwrap(), before);
    let force = ExperimentOptions {
        force: true,
        ..Default::default()
    };
    run_experiment(MINIMAL, dir.path(), &force).unwrap();
}

#[test]
fn bad_config_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment("kernel = constant\ngamma = abc\n", &dir.path().join("x"), &ExperimentOptions::default())
        .unwrap_err();
    assert!(err.is_config());
    assert!(!dir.path().join("x").exists());
}

#[test]
fn csv_schema_is_checked() {
    let rows = [MomentRow {
        t: 1.0,
        m0: 0.5,
        m1: 1.0,
        m_gl: 0.25,
        m_one_minus_lambda: 0.75,
        m2: 2.0,
        leaked_mass: 0.0,
    }];
    let text = moments_to_string(&rows).unwrap();
    assert_eq!(moments_from_str(&text).unwrap(), rows);
    let bumped = text.replacen("v1", "v2", 1);
    assert!(matches!(moments_from_str(&bumped), Err(CsvError::SchemaMismatch { .. })));
    let bare = text.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert!(matches!(moments_from_str(&bare), Err(CsvError::MissingSchema(_))));
    let snap = snapshot_to_string(&StateVector::empty(3)).unwrap();
    assert!(moments_from_str(&snap).is_err());
}

fn config_text() -> impl Strategy<Value = String> {
    (
        prop_oneof![
            Just(("constant", 0.0, 0.0)),
            (-2.5f64..-0.1, 0.05f64..1.0).prop_map(|(g, l)| ("canonical", g, l.max(0.5 * (1.0 - g) + 0.01))),
            (-1.0f64..0.9).prop_map(|g| ("kmr", g, 0.0)),
        ],
        1usize..5000,
        0.1f64..1e4,
        prop::collection::vec(0.01f64..1.0, 0..4),
        prop::option::of(1e-12f64..1e-4),
    )
        .prop_map(|((k, g, l), n, t, snaps, tol)| {
            let mut s = format!("kernel = {k}\ngamma = {g}\nlambda = {l}\nn_bins = {n}\nt_end = {t}\n");
            if !snaps.is_empty() {
                let times: Vec<String> = snaps.iter().map(|f| format!("{}", f * t)).collect();
                s.push_str(&format!("snapshots = {}\n", times.join(", ")));
            }
            if let Some(tol) = tol {
                s.push_str(&format!("rel_tol = {tol:e}   # tighter\n"));
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn serialize_is_a_fixed_point(text in config_text()) {
        let parsed = parse_config(&text);
        prop_assume!(parsed.is_ok());
        let c = parsed.unwrap();
        let once = serialize_config(&c);
        let again = parse_config(&once).unwrap();
        prop_assert_eq!(serialize_config(&again), once);
        prop_assert_eq!(again.n_bins, c.n_bins);
        prop_assert_eq!(again.t_end.to_bits(), c.t_end.to_bits());
        prop_assert_eq!(again.rel_tol.to_bits(), c.rel_tol.to_bits());
    }

    #[test]
    fn snapshots_round_trip_exactly(c in prop::collection::vec(prop_oneof![Just(0.0), 1e-300f64..1e3], 1..80), t in 0.0f64..1e6, leak in 0.0f64..10.0) {
        let mut s = StateVector::from_concentrations(c);
        s.t = t;
        s.leaked_mass = leak;
        s.leaked_number = 0.5 * leak;
        let back = snapshot_from_str(&snapshot_to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(back.t.to_bits(), s.t.to_bits());
        prop_assert_eq!(back.leaked_mass.to_bits(), s.leaked_mass.to_bits());
        prop_assert_eq!(back.leaked_number.to_bits(), s.leaked_number.to_bits());
        let bits = |v: &StateVector| v.c.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&s));
    }
}
