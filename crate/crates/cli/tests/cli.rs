use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3

[schedule]
substeps = 5

[ae]
latent_dim = 4
hidden = [16]
epochs = 3
batch_size = 8

[ldm]
hidden = [16]
embedding_dim = 8
epochs = 3
batch_size = 8

[surrogate]
width = 4
modes = 2
layers = 1
epochs = 2
batch_size = 4
pairs = 12
holdout = 4

[physics]
grid_n = 8
samples = 16
patterns = 4

[invert]
iterations = 6
lr = 1e-2
"#;

fn dilo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dilo")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dilo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_passes_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["verify", "--out", path(dir.path())]);
    let summary: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(summary["passed"], true);
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn pipeline_runs_and_inversion_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");
    let common = ["--config", path(&cfg), "--out", path(&run)];
    for stage in ["gen-data", "train-ae", "train-ldm", "train-surrogate"] {
        ok(&[&[stage][..], &common].concat());
    }
    let metrics = run.join("invert/seed-3/metrics.csv");
    let invert = [&["invert"][..], &common, &["--exact"]].concat();
    ok(&invert);
    let first = std::fs::read(&metrics).unwrap();
    ok(&invert);
    assert_eq!(std::fs::read(&metrics).unwrap(), first);
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 7);

    ok(&[&["invert"][..], &common, &["--instances", "2", "--seed", "10"]].concat());
    assert!(run.join("invert/seed-11/field.tnsr").exists());
    ok(&[&["dps-baseline"][..], &common].concat());
    ok(&[&["ood-diag"][..], &common].concat());
    let report: serde_json::Value = serde_json::from_str(ok(&["report", "--out", path(&run)]).trim()).unwrap();
    for stage in ["gen-data", "train-ae", "train-ldm", "train-surrogate", "invert", "dps-baseline", "ood-diag"] {
        assert!(report.get(stage).is_some(), "{stage}");
    }
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    assert_eq!(dilo(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dilo(&["train-ae", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: ") && err.trim_end().lines().count() == 1, "{err}");
}
