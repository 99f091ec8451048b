//! Exit codes, flag precedence and outputs of the `bevflow` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bevflow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL: &str = r#"
intervals_ms = [0.0, 300.0]
methods = ["no_compensation", "feature_warp_cv", "feature_warp_mha"]
scenes = 1
seeds = [3]
[scenario]
horizon = 10.0
[training]
scenes = 1
max_samples = 100
[training.optimizer]
epochs = 10
"#;

fn config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path
}

fn bevflow(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bevflow"));
    cmd.args(args).env_remove("BEVFLOW_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("BEVFLOW_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn simulate_then_replay() {
    let dir = scratch("replay");
    let cfg = config(&dir);
    let logs = dir.join("logs");
    let out = bevflow(&["-c", cfg.to_str().unwrap(), "simulate", "--interval-ms", "300"], Some(&logs));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(logs.join("observations.jsonl").exists());
    assert!(logs.join("messages_scene0.bin").exists());

    let replayed = dir.join("replayed");
    let out = bevflow(
        &["-c", cfg.to_str().unwrap(), "-o", replayed.to_str().unwrap(), "replay", "--log-dir", logs.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(replayed.join("replay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("300.0,")));
}

#[test]
fn flag_overrides_environment_which_overrides_config() {
    let dir = scratch("precedence");
    let cfg = config(&dir);
    let (from_env, from_flag) = (dir.join("env"), dir.join("flag"));
    let out = bevflow(&["-c", cfg.to_str().unwrap(), "-o", from_flag.to_str().unwrap(), "simulate"], Some(&from_env));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(from_flag.join("observations.jsonl").exists());
    assert!(!from_env.exists());

    std::fs::write(&cfg, format!("out_dir = \"{}\"\n{SMALL}", dir.join("configured").display())).unwrap();
    let out = bevflow(&["-c", cfg.to_str().unwrap(), "simulate"], Some(&from_env));
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(from_env.join("observations.jsonl").exists());
    assert!(!dir.join("configured").exists());
}

#[test]
fn train_then_run_with_the_saved_estimator() {
    let dir = scratch("run");
    let cfg = config(&dir);
    let params = dir.join("est.bin");
    let out = bevflow(
        &["-c", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap(), "train", "--output", params.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(bevflow::flow::EstimatorParams::load(&params).is_ok());
    assert!(dir.join("training.json").exists());

    let with_estimator = dir.join("with_estimator.toml");
    std::fs::write(&with_estimator, format!("estimator_path = \"est.bin\"\n{SMALL}")).unwrap();
    let results = dir.join("results");
    let args = [
        "-c",
        with_estimator.to_str().unwrap(),
        "-o",
        results.to_str().unwrap(),
        "-s",
        "5",
        "-w",
        "2",
        "run",
        "--resume",
    ];
    let out = bevflow(&args, None);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read(results.join("results.csv")).unwrap();
    assert!(
        text(&csv).starts_with("interval_expectation_ms,sigma_t,sigma_r,method,ap50,ap70,mean_center_err,comm_volume")
    );
    assert!(results.join("progress").is_dir());
    assert!(std::fs::read_dir(&results).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    // resuming from the markers reproduces the file
    let out = bevflow(&args, None);
    assert!(out.status.success());
    assert_eq!(std::fs::read(results.join("results.csv")).unwrap(), csv);
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = scratch("fail");
    let missing = bevflow(&["-c", dir.join("absent.toml").to_str().unwrap(), "run"], None);
    assert!(!missing.status.success());
    assert!(text(&missing.stderr).starts_with("error:"), "{}", text(&missing.stderr));

    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "methods = [\"teleport\"]\n").unwrap();
    let out = bevflow(&["-c", bad.to_str().unwrap(), "run"], None);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("error:"));

    let out =
        bevflow(&["replay", "--log-dir", dir.join("nothing").to_str().unwrap(), "-o", dir.to_str().unwrap()], None);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("observations.jsonl"));

    let out = bevflow(&["simulate", "--interval-ms", "-5", "-o", dir.to_str().unwrap()], None);
    assert!(!out.status.success());

    let out = bevflow(&["frobnicate"], None);
    assert!(!out.status.success());
}
