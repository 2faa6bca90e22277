use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sinkhorn_dro::experiment::attack::RobustnessReport;
use sinkhorn_dro::experiment::commands::TrainSummary;

const CONFIG: &str = r#"
seed = 5
[dataset]
kind = "gauss_blobs"
n_per_class = 40
test_per_class = 60
d = 2
separation = 3.0
noise = 0.5
[loss]
kind = "logistic"
[solver]
kind = "sdro_single"
t = 200
tau = 0.05
eta = 2.0
beta0 = 0.2
batch = 8
particles = 4
"#;

fn sdro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdro")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_then_attack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().to_str().unwrap();
    assert!(sdro(&["gen-data", "--config", &cfg, "--out-dir", out]).status.success());
    assert!(sdro(&["train", "--config", &cfg, "--out-dir", out]).status.success());
    assert!(sdro(&["attack-eval", "--config", &cfg, "--out-dir", out])
        .status
        .success());
    for file in [
        "train.csv",
        "test.csv",
        "trace.csv",
        "bank.csv",
        "summary.json",
        "report.csv",
    ] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), RobustnessReport::CSV_HEADER.join(","));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    let summary = TrainSummary::load(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.solver, "sdro_single");
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[0][2] - (1.0 - summary.clean_accuracy)).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| w[0][2] <= w[1][2]));
    assert_eq!(
        fs::read_to_string(dir.path().join("test.csv")).unwrap().lines().count(),
        121
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let trace = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let out = out.to_str().unwrap();
        assert!(sdro(&["train", "--config", &cfg, "--seed", seed, "--out-dir", out])
            .status
            .success());
        fs::read(dir.path().join(name).join("trace.csv")).unwrap()
    };
    assert_eq!(trace("5", "a"), trace("5", "b"));
    assert_ne!(trace("5", "a"), trace("6", "c"));
}

#[test]
fn sample_worstcase_writes_every_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{CONFIG}[sampler]\ntau = 0.05\nsteps = 50\nsamples_per_anchor = 3\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().to_str().unwrap();
    assert!(sdro(&["sample-worstcase", "--config", &cfg, "--out-dir", out])
        .status
        .success());
    let samples = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    let mut lines = samples.lines();
    assert_eq!(lines.next().unwrap(), "anchor_index,sample_index,z_1,z_2");
    assert_eq!(lines.count(), 80 * 3);
}

#[test]
fn bad_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for text in [
        CONFIG.replace("noise = 0.5", "noise = 0.5\ncolour = 1"),
        CONFIG.replace("noise = 0.5", "noise = -0.5"),
        CONFIG.replace("batch = 8", "batch = 500"),
        format!("{CONFIG}[attack]\nradii = [0.3, 0.1]\nsteps = 5\nstep_size = 0.5\n"),
        CONFIG.replace("kind = \"logistic\"", "kind = \"linear\""),
    ] {
        let cfg = write_config(dir.path(), &text);
        let status = sdro(&["train", "--config", &cfg, "--out-dir", out]).status;
        assert_eq!(status.code(), Some(2), "{text}");
    }
}

#[test]
fn missing_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        sdro(&["train", "--config", missing.to_str().unwrap(), "--out-dir", out])
            .status
            .code(),
        Some(2)
    );
    let cfg = write_config(dir.path(), CONFIG);
    assert_eq!(
        sdro(&["attack-eval", "--config", &cfg, "--out-dir", out]).status.code(),
        Some(1)
    );
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = sdro(&["oracle-check", "--out-dir", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
    let csv = fs::read_to_string(dir.path().join("oracle_check.csv")).unwrap();
    assert!(csv.lines().count() > 10);
}
