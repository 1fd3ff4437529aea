use std::fs;
use std::path::Path;
use std::process::Command;

use orthobo::experiment::{load_trace, MANIFEST_FILE};
use orthobo::{build_report, replay, run_experiment, ExperimentSpec, ReportStatus, ResultManifest};

const SMALL: &str = r#"
replications = 2
base_seed = 5
jobs = 2

[defaults]
objective = "quadratic:2"
budget = 3
n_init = 4
mc_samples = 8
optimizer = { raw_samples = 32, restarts = 2, local_budget = 16 }

[[cells]]
method = "orth-ei"
"#;

fn count_files(dir: &Path) -> usize {
    fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}

#[test]
fn one_cell_two_replications_layout_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(SMALL).unwrap();
    let manifest = run_experiment(&spec, tmp.path()).unwrap();

    assert_eq!(count_files(&tmp.path().join("traces/orth-ei-quadratic2")), 2);
    assert_eq!(count_files(&tmp.path().join("aggregate")), 1);
    assert!(tmp.path().join(MANIFEST_FILE).is_file());

    let runs = &manifest.cells[0].runs;
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![5, 6]);
    let trace = load_trace(&tmp.path().join(&runs[1].trace)).unwrap();
    assert_eq!(trace.config.seed, 6);

    let csv = fs::read_to_string(tmp.path().join(&manifest.cells[0].aggregate)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 1);

    let on_disk = ResultManifest::load(&tmp.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(on_disk, manifest);

    let outcome = replay(&tmp.path().join(MANIFEST_FILE)).unwrap();
    assert!(outcome.is_identical(), "{:?}", outcome.mismatched);
    assert_eq!(outcome.matched.len(), 3);

    let report = build_report(&tmp.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(report.status(), ReportStatus::Complete);
    assert_eq!(report.regret.len(), 1);
    assert_eq!(report.regret[0].runs, 2);
}

#[test]
fn replay_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(SMALL).unwrap();
    let manifest = run_experiment(&spec, tmp.path()).unwrap();
    let path = tmp.path().join(&manifest.cells[0].runs[0].trace);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("\"t\": 1", "\"t\": 7", 1)).unwrap();
    let outcome = replay(&tmp.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(outcome.mismatched, vec![manifest.cells[0].runs[0].trace.clone()]);
}

#[test]
fn failed_runs_are_recorded_and_reported() {
    let tmp = tempfile::tempdir().unwrap();
    // The cell's trace directory is a plain file, so every write fails.
    fs::create_dir_all(tmp.path().join("traces")).unwrap();
    fs::write(tmp.path().join("traces/orth-ei-quadratic2"), b"not a directory").unwrap();
    let spec = ExperimentSpec::from_toml(SMALL).unwrap();
    let manifest = run_experiment(&spec, tmp.path()).unwrap();
    assert!(manifest.cells[0].runs.iter().all(|r| !r.status.is_ok()));
    let report = build_report(&tmp.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(report.status(), ReportStatus::Partial);
    assert_eq!(report.missing.len(), 2);
    assert!(report.regret.is_empty());
    let csv = fs::read_to_string(tmp.path().join(&manifest.cells[0].aggregate)).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn probe_cells_feed_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
replications = 1

[[probes]]
objective = "levy:3"
estimator = "orth-ei"
mc_samples = 8
repeats = 3
probes = 6
history = 10

[[probes]]
name = "tpe-levy"
objective = "levy:3"
estimator = "tpe-orth"
design = "random"
mc_samples = 8
repeats = 3
probes = 6
history = 12
"#;
    let spec = ExperimentSpec::from_toml(text).unwrap();
    let manifest = run_experiment(&spec, tmp.path()).unwrap();
    assert!(manifest.probes.iter().all(|p| p.status.is_ok()));
    let report = build_report(&tmp.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(report.variance.len(), 2);
    assert_eq!(report.ranking.len(), 4);
    assert_eq!(report.ranking[0].estimator, "mc-ei");
    assert_eq!(report.ranking[3].estimator, "tpe-orth");
    assert!(replay(&tmp.path().join(MANIFEST_FILE)).unwrap().is_identical());
}

fn orthobo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orthobo"))
}

#[test]
fn cli_run_report_replay_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = tmp.path().join("spec.toml");
    fs::write(&spec_path, SMALL).unwrap();
    let out = tmp.path().join("out");
    let status = orthobo().arg("run").arg(&spec_path).arg("--out").arg(&out).args(["--jobs", "1"]).env("ORTHOBO_SEED", "40").status().unwrap();
    assert!(status.success());
    let manifest = ResultManifest::load(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.spec.base_seed, 40);
    assert_eq!(manifest.cells[0].runs[1].seed, 41);

    let report = orthobo().arg("report").arg(out.join(MANIFEST_FILE)).output().unwrap();
    assert_eq!(report.status.code(), Some(0));
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("| orth-ei-quadratic2 | orth-ei | quadratic:2 | 2 |"));

    let replayed = orthobo().arg("replay").arg(out.join(MANIFEST_FILE)).status().unwrap();
    assert_eq!(replayed.code(), Some(0));
}

#[test]
fn cli_report_on_empty_manifest_is_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml("replications = 1").unwrap();
    run_experiment(&spec, tmp.path()).unwrap();
    let out = orthobo().arg("report").arg(tmp.path().join(MANIFEST_FILE)).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stdout).unwrap().contains("| cell | method |"));

    let missing = orthobo().arg("report").arg(tmp.path().join("nope.json")).status().unwrap();
    assert_eq!(missing.code(), Some(1));
}

#[test]
fn cli_probe_writes_json_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let status = orthobo()
        .args(["probe", "--objective", "levy:3", "--kernel", "matern52-ard", "--estimator", "mc-ei"])
        .args(["--mc-samples", "8", "--repeats", "3", "--probes", "4", "--seed", "2", "--history", "10", "--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(tmp.path().join("levy3-matern52-ard-s8.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("probe_id,repeat_id,estimator,value"));
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("levy3-matern52-ard-s8.json")).unwrap()).unwrap();
    assert_eq!(json["estimators"].as_array().unwrap().len(), 2);
    assert_eq!(json["config"]["seed"], 2);
}

#[test]
fn cli_rejects_unknown_names() {
    let out = orthobo().args(["probe", "--estimator", "qei"]).output().unwrap();
    assert!(!out.status.success());
    let out = orthobo().args(["bench", "--methods", "mc-ei,bogus"]).output().unwrap();
    assert!(!out.status.success());
}
