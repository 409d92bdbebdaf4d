use std::path::Path;
use std::process::{Command, Output};

fn holo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holo")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = r#"
seed = 1

[model]
seq_len = 8
d_in = 4
d_model = 8
heads = 2
layers = 1
d_ff = 8

[data]
n = 80

[data.generator]
generator = "phase_classification"
seq_len = 8
d = 4
num_classes = 4
noise_std = 0.3

[train]
epochs = 2
batch_size = 8

[verify]
p1_trials = 20
p2_trials = 20
p3_trials = 20
p4_grid = 50
p5_trials = 20
p7_trials = 20
p8_samples = 5000
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn verify_default_passes_with_eight_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = holo(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = String::from_utf8(o.stdout).unwrap();
    assert_eq!(lines.lines().count(), 8);
    for p in ["P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8"] {
        assert!(out.join("verify").join(format!("{p}.json")).exists());
    }
}

#[test]
fn verify_marks_negative_controls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("v");
    let o = holo(&["verify", "--config", &cfg, "--ablate", "coherent_sum", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("P3 expected-fail"), "{err}");
    assert!(err.contains("P2 pass"), "{err}");
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[model]\nd_modle = 3\n");
    assert_eq!(code(&holo(&["verify", "--config", &bad])), 2);
    let broken = write_config(dir.path(), "this is = = not toml");
    assert_eq!(code(&holo(&["train", "--config", &broken])), 2);
    assert_eq!(code(&holo(&["train", "--config", "/nonexistent/x.toml"])), 2);
    assert_eq!(code(&holo(&["frobnicate"])), 2);
    assert_eq!(code(&holo(&["train", "--ablate", "everything"])), 2);
}

#[test]
fn train_eval_robustness_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let runs = dir.path().join("runs");
    let run = runs.join("full");
    let run_s = run.to_str().unwrap();
    let o = holo(&["train", "--config", &cfg, "--out", run_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.ckpt", "test.holodata", "history.jsonl", "timing.jsonl", "metrics.json", "config.toml"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let history = std::fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(!history.contains("wall_time"));

    let o = holo(&["eval", "--config", &cfg, "--out", run_s]);
    assert_eq!(code(&o), 0);
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.contains("macro_f1"), "{line}");

    let o = holo(&["robustness", "--config", &cfg, "--out", run_s, "--noise", "sigma", "--grid", "0,0.2,0.4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("robustness_sigma.json").exists());
    let o = holo(&["robustness", "--config", &cfg, "--out", run_s, "--grid", "0.1,0.2"]);
    assert_eq!(code(&o), 2, "grid must start at 0");

    // A second run directory with an ablation, and one without metrics.
    let o = holo(&["train", "--config", &cfg, "--ablate", "phase_decay", "--out", runs.join("pd").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    std::fs::create_dir_all(runs.join("broken")).unwrap();
    std::fs::copy(run.join("config.toml"), runs.join("broken/config.toml")).unwrap();

    let o = holo(&["report", "--out", runs.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken"));
    let main = std::fs::read_to_string(runs.join("table_main.csv")).unwrap();
    assert_eq!(main.lines().count(), 3, "{main}");
    let ablation = std::fs::read_to_string(runs.join("table_ablation.csv")).unwrap();
    assert!(ablation.contains("w/o phase decay"));
    let first = std::fs::read(runs.join("report.json")).unwrap();
    assert_eq!(code(&holo(&["report", "--out", runs.to_str().unwrap()])), 0);
    assert_eq!(std::fs::read(runs.join("report.json")).unwrap(), first);
}

#[test]
fn metric_threshold_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[eval]\nmin_accuracy = 1.01\n"));
    let o = holo(&["train", "--config", &cfg, "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn zero_learning_rate_gives_flat_history() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("[model]\n", "[model]\ndropout = 0.0\n")
        + "\n[train.adam]\nlr = 0.0\nweight_decay = 0.0\n";
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("r");
    assert_eq!(code(&holo(&["train", "--config", &cfg, "--out", out.to_str().unwrap()])), 0);
    let totals: Vec<f64> = std::fs::read_to_string(out.join("history.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["total"].as_f64().unwrap())
        .collect();
    assert!(totals.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{totals:?}");
}

#[test]
fn gradcheck_command_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[gradcheck]\nper_head = 1\n");
    let o = holo(&["gradcheck", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("gradcheck.jsonl").exists());
}
