//! Drives the `simcon` binary end to end and checks the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

fn simcon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simcon"))
        .current_dir(dir)
        .env_remove("SIMCON_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Synthetic regimes plus a short-training config pretraining on them and
/// finetuning on the mixture.
fn workspace(extra_training: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = simcon(dir.path(), &["gen-synthetic", "--out", ".", "--mixture", "0.7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let config = format!(
        r#"seed = 3
[[datasets.pretrain]]
name = "sine"
path = "sine.csv"
[[datasets.pretrain]]
name = "ar1"
path = "ar1.csv"
[[datasets.pretrain]]
name = "walk"
path = "walk.csv"
stride = 2
[[datasets.targets]]
name = "mix"
path = "mix.csv"
[training]
pretrain_epochs = 1
finetune_epochs = 1
{extra_training}
[eval]
horizons = [96]
lambda_grid = [0.1, 1.0]
"#
    );
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    dir
}

#[test]
fn gradcheck_passes_on_a_fresh_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let out = simcon(dir.path(), &["gradcheck", "--batches", "2", "--format", "csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert_eq!(table.lines().count(), 1 + 20, "{table}");
    assert!(table.lines().skip(1).all(|l| l.ends_with(",pass")), "{table}");
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = simcon(dir.path(), &["pretrain", "--no-such-flag"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Usage:"), "{}", stderr(&out));
}

#[test]
fn missing_config_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = simcon(dir.path(), &["build-collection"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("SIMCON_CONFIG"));

    std::fs::write(dir.path().join("bad.toml"), "[training]\nlamda = 0.5\n").unwrap();
    let out = simcon(dir.path(), &["--config", "bad.toml", "build-collection"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lamda"), "{}", stderr(&out));
}

#[test]
fn missing_dataset_file_exits_3_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), "[[datasets.pretrain]]\nname = \"x\"\npath = \"nowhere.csv\"\n").unwrap();
    let out = simcon(dir.path(), &["--config", "exp.toml", "build-collection"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));
}

#[test]
fn every_stderr_line_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = simcon(dir.path(), &["gen-synthetic", "--out", "d", "--with-config"]);
    assert_eq!(code(&out), 0);
    let err = stderr(&out);
    assert!(!err.is_empty());
    for line in err.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert!(v["level"].is_string() && v["msg"].is_string());
    }
}

#[test]
fn gen_synthetic_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        assert_eq!(code(&simcon(dir.path(), &["--seed", "5", "gen-synthetic", "--out", sub])), 0);
    }
    for name in ["sine.csv", "ar1.csv", "walk.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 4001);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 5);
    }
    assert_eq!(code(&simcon(dir.path(), &["gen-synthetic", "--out", "c"])), 0);
    assert_ne!(
        std::fs::read(dir.path().join("a/ar1.csv")).unwrap(),
        std::fs::read(dir.path().join("c/ar1.csv")).unwrap()
    );
}

#[test]
fn generated_config_loads_through_the_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simcon(dir.path(), &["gen-synthetic", "--out", "d", "--with-config"])), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_simcon"))
        .current_dir(dir.path())
        .env("SIMCON_CONFIG", "d/experiment.toml")
        .args(["build-collection", "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.starts_with("dataset,train_rows,features,stride,repetition,windows,share_pct"), "{table}");
    // 2800 train rows, 96 + 96 window, stride 1, 4 features.
    assert!(table.contains("sine,2800,4/4,1,1,10436,33.33"), "{table}");
}

#[test]
fn divergence_exits_4() {
    let dir = workspace("adam = { learning_rate = 1e300 }");
    let out = simcon(dir.path(), &["--config", "exp.toml", "pretrain"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
}

#[test]
fn evaluate_without_checkpoints_exits_3() {
    let dir = workspace("");
    let out = simcon(dir.path(), &["--config", "exp.toml", "evaluate"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("pretrain-O96.json"), "{}", stderr(&out));
}

#[test]
fn pipeline_runs_end_to_end_and_reproduces() {
    let dir = workspace("reference_batch = 96");
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "exp.toml"];
        full.extend_from_slice(args);
        let out = simcon(dir.path(), &full);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        stdout(&out)
    };

    let table = run(&["pretrain", "--format", "csv"]);
    assert!(table.starts_with("horizon,epoch,loss,mse,contrastive,val_mse,val_mae,kept"), "{table}");
    let runs = dir.path().join("runs");
    let first = std::fs::read(runs.join("pretrain-O96.json")).unwrap();
    let record = std::fs::read_to_string(runs.join("pretrain-O96.jsonl")).unwrap();
    assert!(record.lines().last().unwrap().contains("\"summary\""));

    run(&["pretrain"]);
    assert_eq!(first, std::fs::read(runs.join("pretrain-O96.json")).unwrap(), "pretrain is not reproducible");

    let finetuned = run(&["finetune", "--target", "mix"]);
    assert!(finetuned.contains("finetuned test error"), "{finetuned}");
    assert!(runs.join("finetune-mix-O96.json").exists());

    let sim = run(&["similarity", "--format", "csv"]);
    let row = sim.lines().find(|l| l.starts_with("mix,")).unwrap();
    let total: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((total - 100.0).abs() < 0.05, "{sim}");

    for stage in ["pretrain", "finetune"] {
        let json = run(&["evaluate", "--stage", stage, "--ratios", "--format", "json"]);
        let tables: Vec<serde_json::Value> = json.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(tables.len(), 2);
        let mse = tables[0]["rows"][0]["mse"].as_f64().unwrap();
        assert!(mse.is_finite() && mse > 0.0);
    }

    let sweep = run(&["sweep", "--axis", "lambda", "--format", "csv"]);
    let blocks: Vec<&str> = sweep.split("\n\n").collect();
    assert_eq!(blocks.len(), 2, "{sweep}");
    assert!(blocks[0].starts_with("lambda,mix"), "{sweep}");
    assert_eq!(blocks[0].lines().count(), 3);
}
