use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lll_cli::config::ExperimentConfig;
use lll_cli::runner::METRICS_HEADER;

fn lll(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lll"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SYNTH_BP: &str = r#"
dataset = "synth-linear"
synth-in = 20
synth-out = 5
synth-n = 512
hidden = []
activation = "tanh"
algorithm = "bp"
epochs = 10
batch-size = 32
seed = 3
dtype = "f64"
fw-opt = "sgd"
fw-schedule = "constant"
fw-lr = 0.01
deterministic-metrics = true
"#;

fn metric_column(csv: &str, col: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{SYNTH_BP}fw-lrr = 0.1\n"));
    let out = lll(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fw-lrr"));
}

#[test]
fn out_of_range_values_are_rejected() {
    for bad in ["fw-lr = 1.5", "i-lr = 0.0", "batch-size = 0", "fb-gamma = 1.2", "i-mom = 0.9"] {
        let text = SYNTH_BP.lines().filter(|l| !l.starts_with(bad.split(' ').next().unwrap())).collect::<Vec<_>>().join("\n");
        let text = format!("{text}\n{bad}\n").replace("\"bp\"", "\"dkp-pc\"");
        let err = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, lll_core::Error::Config(_)), "{bad}: {err}");
    }
    let missing = "dataset = \"mnist\"\ndata-dir = \"/nonexistent\"\nalgorithm = \"bp\"\nfw-lr = 0.001\n";
    assert!(matches!(ExperimentConfig::from_toml(missing, Path::new(".")), Err(lll_core::Error::Config(_))));
}

#[test]
fn zero_epochs_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SYNTH_BP.replace("epochs = 10", "epochs = 0"));
    let run = dir.path().join("run");
    let out = lll(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(run.join("metrics.csv")).unwrap(), format!("{METRICS_HEADER}\n"));
    assert!(run.join("model.lll").exists());
}

// convex least squares with a small SGD step: every epoch lowers the loss
#[test]
fn linear_regression_loss_decreases_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SYNTH_BP);
    let run = dir.path().join("run");
    let out = lll(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let loss = metric_column(&csv, 1);
    assert_eq!(loss.len(), 10);
    assert!(loss.windows(2).all(|w| w[1] < w[0]), "{loss:?}");
    let flops = metric_column(&csv, 5);
    assert!(flops.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn metrics_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = SYNTH_BP
        .replace("\"bp\"", "\"dkp-pc\"")
        .replace("hidden = []", "hidden = [16, 16]")
        .replace("fw-opt = \"sgd\"", "fw-opt = \"adamw\"\nfb-opt = \"nadam\"\nfb-gamma = 0.999")
        .replace("epochs = 10", "epochs = 3");
    let cfg = write_config(dir.path(), "c.toml", &body);
    let mut files = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let run = dir.path().join(format!("run{i}"));
        let out = lll(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()], &[("LLL_THREADS", threads)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(fs::read(run.join("metrics.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = SYNTH_BP
        .replace("synth-in = 20", "synth-in = 400")
        .replace("fw-lr = 0.01", "fw-lr = 0.9")
        .replace("epochs = 10", "epochs = 200");
    let cfg = write_config(dir.path(), "c.toml", &body);
    let out = lll(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

fn diag(kind: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", body);
    let run = dir.path().join("run");
    let out = lll(&["diag", "--kind", kind, "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir, run)
}

const SYNTH_MLP: &str = r#"
dataset = "synth-linear"
synth-in = 784
synth-out = 10
synth-n = 256
hidden = [128, 128]
activation = "tanh"
fw-lr = 0.001
i-lr = 0.1
seed = 1
dtype = "f64"
diag-batches = 30
align-window = 10
"#;

#[test]
fn diag_flops_reports_the_forward_row() {
    let (_d, run) = diag("flops", &format!("{SYNTH_MLP}algorithm = \"bp\"\n"));
    let csv = fs::read_to_string(run.join("flops.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "forward,118016,236032"), "{csv}");
    assert_eq!(csv.lines().next(), Some("phase,macs,flops"));
}

#[test]
fn diag_align_last_layer_is_exact() {
    let (_d, run) = diag("align", &format!("{SYNTH_MLP}algorithm = \"dkp\"\n"));
    let csv = fs::read_to_string(run.join("align.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let last: Vec<&Vec<&str>> = rows.iter().filter(|r| r[1] == "3").collect();
    assert_eq!(last.len(), 30);
    for r in last {
        assert!((r[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{r:?}");
    }
}

#[test]
fn diag_errorprop_for_pc_has_the_delay_triangle() {
    let (_d, run) = diag("errorprop", &format!("{SYNTH_MLP}algorithm = \"pc\"\n"));
    let pgm = fs::read(run.join("errorprop.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    let csv = fs::read_to_string(run.join("errorprop.csv")).unwrap();
    // hidden layer ℓ stays silent until t = L − ℓ
    let depth = 3;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (l, t, v): (usize, usize, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap());
        if l < depth && t < depth - l {
            assert_eq!(v, 0.0, "layer {l} t {t}");
        }
    }
}

#[test]
fn diag_energy_writes_traces() {
    let (_d, run) = diag("energy", &format!("{SYNTH_MLP}algorithm = \"dkp-pc\"\ni-steps = 4\n"));
    let csv = fs::read_to_string(run.join("energy.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("batch,t,free_energy"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap().is_finite()));
}

#[test]
fn verify_delay_suite_passes() {
    let out = lll(&["verify", "--suite", "delay"], &[]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let bad = lll(&["verify", "--suite", "nope"], &[]);
    assert_eq!(bad.status.code(), Some(2));
}
