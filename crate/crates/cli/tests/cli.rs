use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn tsalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsalc")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("logistic_realizable.json");
    let out = tsalc(&["run", "--config", s(&cfg), "--out-dir", s(dir.path()), "--override", "segments=30"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "run.json",
        "run.csv",
        "diagnostics.csv",
        "summary.json",
        "grid.json",
        "hypotheses.json",
        "cost.svg",
        "mass_outside.svg",
        "regret.svg",
        "posterior_true.svg",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in ["eps_l_hat", "p0_hat", "r_squared", "bound"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    let header = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(header.starts_with("t,mass_outside_H,mass_outside_KL,T_d_t,M_T,regret_est,bound_term3"));
    assert_eq!(header.lines().count(), 32);
}

#[test]
fn seed_flag_changes_the_run_and_is_reproducible() {
    let cfg = config("logistic_realizable.json");
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, seed) in dirs.iter().zip(["11", "11", "12"]) {
        let out =
            tsalc(&["run", "--config", s(&cfg), "--out-dir", s(d.path()), "--seed", seed, "--override", "segments=20"]);
        assert_eq!(code(&out), 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("run.json")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("logistic_realizable.json");
    for extra in
        [["--override", "plant.unknown_key=1"], ["--override", "schema_version=99"], ["--override", "segments"]]
    {
        let mut args = vec!["run", "--config", s(&cfg), "--out-dir", s(dir.path())];
        args.extend(extra);
        assert_eq!(code(&tsalc(&args)), 2, "{extra:?}");
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&tsalc(&["run", "--config", s(&bad)])), 2);
}

#[test]
fn plant_blowup_exits_with_3_and_keeps_the_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = tsalc(&["run", "--config", s(&config("blowup_polynomial.json")), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["summary"]["status"]["state"], "plant_blowup");
}

#[test]
fn io_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tsalc(&["run", "--config", s(&dir.path().join("absent.json"))])), 4);
    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    let out = tsalc(&[
        "run",
        "--config",
        s(&config("logistic_realizable.json")),
        "--out-dir",
        s(&file.join("sub")),
        "--override",
        "segments=2",
    ]);
    assert_eq!(code(&out), 4);
    assert_eq!(code(&tsalc(&["report", "--out-dir", s(&dir.path().join("nothing"))])), 4);
}

#[test]
fn verify_basis_and_approx_bound_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("logistic_realizable.json");
    let out = tsalc(&["verify-basis", "--config", s(&cfg), "--out-dir", s(dir.path()), "--samples", "50"]);
    assert_eq!(code(&out), 0);
    let check: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("basis_check.json")).unwrap()).unwrap();
    assert_eq!(check["passed"], true);

    let out = tsalc(&["approx-bound", "--config", s(&cfg), "--out-dir", s(dir.path()), "--targets", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bound_report.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
    let trace = std::fs::read_to_string(dir.path().join("objective_trace.csv")).unwrap();
    assert!(trace.starts_with("target,channel,iteration,objective\n"));
    assert!(trace.lines().count() > 3);
}

#[test]
fn report_regenerates_outputs_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("logistic_realizable.json");
    assert_eq!(code(&tsalc(&["run", "--config", s(&cfg), "--out-dir", s(dir.path()), "--override", "segments=15"])), 0);
    let before = std::fs::read(dir.path().join("regret.svg")).unwrap();
    std::fs::remove_file(dir.path().join("regret.svg")).unwrap();
    std::fs::remove_file(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(code(&tsalc(&["report", "--out-dir", s(dir.path())])), 0);
    assert_eq!(std::fs::read(dir.path().join("regret.svg")).unwrap(), before);
    assert!(dir.path().join("diagnostics.csv").is_file());
}

#[test]
fn replicates_write_aggregate_and_per_replicate_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("logistic_realizable.json");
    let out = tsalc(&[
        "replicates",
        "--config",
        s(&cfg),
        "--out-dir",
        s(dir.path()),
        "--override",
        "segments=20",
        "--override",
        "replicates=3",
    ]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("aggregate.json").is_file());
    assert!(dir.path().join("aggregate.csv").is_file());
    for r in 0..3 {
        assert!(dir.path().join(format!("replicate_{r:03}/run.json")).is_file());
    }
}
