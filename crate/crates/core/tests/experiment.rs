use std::path::Path;

use tsalc::experiment::{
    diagnostics_csv, emit_plots, read_run, run_experiment, run_replicates, write_run, ExperimentConfig, RunStatus,
};
use tsalc::posterior::Selection;
use tsalc::Execution;

fn load(name: &str, overrides: &[&str]) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::load(&path, &overrides).unwrap()
}

fn logistic(overrides: &[&str]) -> ExperimentConfig {
    load("logistic_realizable.json", overrides)
}

#[test]
fn single_segment_run() {
    let rec = run_experiment(&logistic(&["segments=1"]), Execution::Sequential).unwrap();
    assert!(rec.completed());
    assert_eq!(rec.rows.len(), 1);
    assert_eq!(rec.diagnostics.len(), 2);
    assert_eq!(rec.rows[0].observed_g, rec.initial_g);
    let w = &rec.rows[0].weights;
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Too few points for a decay fit.
    assert!(rec.summary.eps_l_hat.is_none());
}

#[test]
fn runs_are_reproducible_and_policy_independent() {
    let cfg = logistic(&["segments=40"]);
    let a = run_experiment(&cfg, Execution::Sequential).unwrap();
    let b = run_experiment(&cfg, Execution::Parallel).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = run_experiment(&logistic(&["segments=40", "seed=2025"]), Execution::Sequential).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn every_posterior_row_is_normalized() {
    let rec = run_experiment(&logistic(&["segments=60"]), Execution::default()).unwrap();
    for row in &rec.rows {
        assert!((row.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.weights.iter().all(|w| *w >= 0.0));
    }
    assert_eq!(rec.diagnostics.len(), 61);
}

#[test]
fn small_realizable_set_gains_mass_on_the_truth_when_sampling_the_true_density() {
    for seed in 0..10 {
        let seed_arg = format!("seed={seed}");
        let cfg = logistic(&["hypotheses.count=5", "segments=50", "selection=density_sampled", &seed_arg]);
        assert_eq!(cfg.selection, Selection::DensitySampled);
        let rec = run_experiment(&cfg, Execution::default()).unwrap();
        let first = rec.diagnostics.first().unwrap().mass_true.unwrap();
        let last = rec.diagnostics.last().unwrap().mass_true.unwrap();
        assert_eq!(rec.hypotheses.len(), 5);
        assert!((first - 0.2).abs() < 1e-12);
        assert!(last > first, "seed {seed}: {first} -> {last}");
    }
}

#[test]
fn one_replicate_matches_a_single_run() {
    let cfg = logistic(&["segments=30", "replicates=1"]);
    let (report, records) = run_replicates(&cfg, Execution::default()).unwrap();
    let single = run_experiment(&cfg, Execution::default()).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].as_ref().unwrap(), &single);
    assert_eq!(report.replicates[0].seed, cfg.seed);
}

#[test]
fn aggregates_are_fixed_by_the_seed() {
    let cfg = logistic(&["segments=30", "replicates=4"]);
    let (a, _) = run_replicates(&cfg, Execution::Parallel).unwrap();
    let (b, _) = run_replicates(&cfg, Execution::Sequential).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.regret_mean.len(), 31);
    let seeds: std::collections::BTreeSet<u64> = a.replicates.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 4);
}

#[test]
fn plant_blowup_leaves_a_readable_partial_record() {
    let cfg = load("blowup_polynomial.json", &[]);
    let rec = run_experiment(&cfg, Execution::default()).unwrap();
    let RunStatus::PlantBlowup { segment, .. } = rec.summary.status else {
        panic!("expected a blowup, got {:?}", rec.summary.status);
    };
    assert!(segment > 0 && segment < cfg.segments);
    assert_eq!(rec.rows.len(), segment);
    assert_eq!(rec.summary.segments_completed, segment);

    let dir = tempfile::tempdir().unwrap();
    write_run(&rec, dir.path()).unwrap();
    let back = read_run(&dir.path().join("run.json")).unwrap();
    assert_eq!(back, rec);
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), rec.diagnostics.len() + 1);
    assert!(csv.starts_with("t,mass_outside_H,mass_outside_KL,T_d_t,M_T,regret_est,bound_term3"));
}

#[test]
fn blowup_in_the_first_segment_draws_only_the_cost_chart() {
    let cfg = load("blowup_polynomial.json", &["seed=1"]);
    let rec = run_experiment(&cfg, Execution::default()).unwrap();
    assert_eq!(rec.summary.status, RunStatus::PlantBlowup { segment: 0, step: 3 });
    assert!(rec.rows.is_empty());
    assert_eq!(rec.diagnostics.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_plots(&rec, dir.path()).unwrap();
    let names: Vec<_> = written.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["cost.csv", "cost.svg"]);
}

#[test]
fn written_artifacts_are_byte_stable() {
    let rec = run_experiment(&logistic(&["segments=25"]), Execution::default()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut fa = write_run(&rec, a.path()).unwrap();
    fa.extend(emit_plots(&rec, a.path()).unwrap());
    write_run(&rec, b.path()).unwrap();
    emit_plots(&rec, b.path()).unwrap();
    assert!(fa.len() >= 12);
    for p in &fa {
        let name = p.file_name().unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    assert_eq!(diagnostics_csv(&rec), std::fs::read_to_string(a.path().join("diagnostics.csv")).unwrap());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/logistic_realizable.json");
    let err = ExperimentConfig::load(&path, &["plant.colour=blue".to_string()]).unwrap_err();
    assert!(matches!(err, tsalc::Error::Config(_)), "{err:?}");
    let err = ExperimentConfig::load(&path, &["schema_version=2".to_string()]).unwrap_err();
    assert!(matches!(err, tsalc::Error::Config(_)), "{err:?}");
}
