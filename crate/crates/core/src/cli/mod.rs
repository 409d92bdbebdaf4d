//! Experiment harness behind the `holo` binary.
//!
//! Commands write their artifacts under the output directory and print one
//! JSON record per result on stdout. Human-readable progress goes to stderr.
//! Exit status: 0 on success, 1 when a check or metric threshold fails (or
//! a run aborts), 2 on usage and configuration errors.

pub mod config;
pub mod metrics;
pub mod report;
pub mod robustness;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use config::{check_compatible, DataSpec, EvalSpec, GradCheckSpec, RobustnessSpec, RunConfig};
pub use metrics::{classification_metrics, evaluate, evaluate_dataset, regression_metrics, Metrics};
pub use report::{variant_name, write_report, Report};
pub use robustness::{robustness_sweep, summarize, NoiseAxis, RobustnessReport};

use crate::autodiff::{derive_seed, gradcheck_suite, train, TrainConfig};
use crate::error::{HoloError, Result};
use crate::model::{load_checkpoint, save_checkpoint, HoloModel};
use crate::synthdata::Dataset;
use crate::theory::run_all;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    #[value(name = "phase_decay")]
    PhaseDecay,
    #[value(name = "coherent_sum")]
    CoherentSum,
    #[value(name = "reconstruction")]
    Reconstruction,
    /// Phase-blind baseline: the model sees `|X|`.
    #[value(name = "magnitude_only")]
    MagnitudeOnly,
}

#[derive(Debug, Parser)]
#[command(name = "holo", version, about = "Holographic attention experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; every section is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Disables a model component (repeatable).
    #[arg(long, global = true, value_enum)]
    pub ablate: Vec<Ablation>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the attention property checks.
    Verify,
    /// Compare analytic and numeric gradients on small models.
    Gradcheck,
    /// Train on the configured dataset and evaluate on its test split.
    Train,
    /// Evaluate a checkpoint on a dataset.
    Eval {
        /// Defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `<out>/test.holodata`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over a noise grid.
    Robustness {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sigma")]
        noise: NoiseAxis,
        /// Comma-separated levels starting at 0.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Consolidate the run directories under `--out` into tables.
    Report,
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Success,
    /// A check or threshold failed; the message names it.
    Failed(String),
}

/// One training-history record. Wall time is kept out so reruns produce
/// identical files; it goes to `timing.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub epoch: usize,
    pub recon: f64,
    pub task: f64,
    pub phase_reg: f64,
    pub total: f64,
    pub lr: f64,
    /// Test accuracy or MAE after this epoch, when tracked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_metric: Option<f64>,
}

#[derive(Serialize)]
struct TimingLine {
    epoch: usize,
    wall_time_s: f64,
}

/// Exit status for a command result.
pub fn exit_code(result: &Result<Outcome>) -> u8 {
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Failed(_)) => 1,
        Err(HoloError::Config(_)) => 2,
        Err(_) => 1,
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.verify.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    for a in &cli.ablate {
        match a {
            Ablation::PhaseDecay => {
                cfg.model.ablate_phase_decay = true;
                cfg.verify.attention.ablate_phase_decay = true;
            }
            Ablation::CoherentSum => {
                cfg.model.ablate_coherent_sum = true;
                cfg.verify.attention.ablate_coherent_sum = true;
            }
            Ablation::Reconstruction => cfg.model.ablate_reconstruction = true,
            Ablation::MagnitudeOnly => cfg.model.magnitude_only = true,
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Verify => cmd_verify(&cfg),
        Command::Gradcheck => cmd_gradcheck(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Eval { checkpoint, dataset } => cmd_eval(&cfg, checkpoint.as_deref(), dataset.as_deref()),
        Command::Robustness {
            checkpoint,
            dataset,
            noise,
            grid,
        } => cmd_robustness(&cfg, checkpoint.as_deref(), dataset.as_deref(), *noise, grid.as_deref()),
        Command::Report => cmd_report(&cfg.out),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| HoloError::Format(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| HoloError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn threshold_outcome(cfg: &EvalSpec, m: &Metrics) -> Outcome {
    if let (Some(min), Some(acc)) = (cfg.min_accuracy, m.accuracy) {
        if acc < min {
            return Outcome::Failed(format!("accuracy {acc} below required {min}"));
        }
    }
    if let (Some(max), Some(mae)) = (cfg.max_mae, m.mae) {
        if mae > max {
            return Outcome::Failed(format!("MAE {mae} above allowed {max}"));
        }
    }
    Outcome::Success
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.out.join("verify");
    std::fs::create_dir_all(&dir)?;
    let reports = run_all(&cfg.verify)?;
    let mut summary = String::new();
    let mut failures = Vec::new();
    for r in &reports {
        write_json(&dir.join(format!("{}.json", r.property)), r)?;
        summary += &r.to_json();
        summary.push('\n');
        println!("{}", r.to_json());
        let status = match (r.pass, r.expected_fail) {
            (true, false) => "pass",
            (false, true) => "expected-fail",
            (true, true) => "UNEXPECTED PASS",
            (false, false) => "FAIL",
        };
        eprintln!(
            "{} {status}: max_violation {:.3e} (tolerance {:.1e})",
            r.property, r.max_violation, r.tolerance
        );
        if !r.as_expected() {
            failures.push(format!("{} (max_violation {:e})", r.property, r.max_violation));
        }
    }
    std::fs::write(dir.join("summary.jsonl"), summary)?;
    Ok(if failures.is_empty() {
        Outcome::Success
    } else {
        Outcome::Failed(format!("property checks failed: {}", failures.join(", ")))
    })
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&cfg.out)?;
    let cases = gradcheck_suite(cfg.gradcheck.per_head, cfg.gradcheck.tol, cfg.seed)?;
    let mut lines = String::new();
    let mut failures = Vec::new();
    for head in ["classification", "regression"] {
        let checked = cases.iter().filter(|c| c.head == head && c.report.is_some()).count();
        if checked < cfg.gradcheck.per_head {
            failures.push(format!("{head}: only {checked} instances away from kinks"));
        }
    }
    for c in &cases {
        let line = to_json(c)?;
        println!("{line}");
        lines += &line;
        lines.push('\n');
        match &c.report {
            None => eprintln!("{} seed {}: skipped (kink distance {:.1e})", c.head, c.seed, c.kink_distance),
            Some(r) => {
                eprintln!(
                    "{} seed {}: max relative error {:.2e} over {} components",
                    c.head, c.seed, r.max_rel_err, r.components
                );
                if !r.pass {
                    failures.push(format!("{} seed {} ({:e})", c.head, c.seed, r.max_rel_err));
                }
            }
        }
    }
    std::fs::write(cfg.out.join("gradcheck.jsonl"), lines)?;
    Ok(if failures.is_empty() {
        Outcome::Success
    } else {
        Outcome::Failed(format!("gradient check failed: {}", failures.join(", ")))
    })
}

/// Trains per `cfg` and writes `model.ckpt`, `test.holodata`,
/// `history.jsonl`, `timing.jsonl`, `metrics.json` and the resolved
/// `config.toml` into `cfg.out`. Returns the test metrics.
pub fn train_run(cfg: &RunConfig) -> Result<Metrics> {
    std::fs::create_dir_all(&cfg.out)?;
    // Stored relative to the run directory so copies of it compare equal.
    let stored = RunConfig {
        out: PathBuf::from("."),
        ..cfg.clone()
    };
    std::fs::write(cfg.out.join("config.toml"), stored.to_toml()?)?;
    let ds = cfg.data.build()?;
    check_compatible(&cfg.model, &ds)?;
    let (train_set, test_set) = ds.split(cfg.data.train_fraction);
    if train_set.is_empty() || test_set.is_empty() {
        return Err(HoloError::Data(format!(
            "split of {} samples leaves an empty train or test set",
            ds.len()
        )));
    }
    let mut model = HoloModel::new(cfg.model.clone(), derive_seed(cfg.seed, 0x11))?;
    let tc = TrainConfig {
        seed: derive_seed(cfg.seed, 0x12),
        ..cfg.train.clone()
    };
    let mut history = BufWriter::new(File::create(cfg.out.join("history.jsonl"))?);
    let mut timing = BufWriter::new(File::create(cfg.out.join("timing.jsonl"))?);
    let mut io_err: Option<HoloError> = None;
    let track = cfg.eval.track_test_metric;
    let result = train(&mut model, &train_set.inputs, &train_set.targets, &tc, |rec, m| {
        let test_metric = if track {
            evaluate_dataset(m, &test_set).ok().map(|x| x.primary())
        } else {
            None
        };
        let line = HistoryLine {
            epoch: rec.epoch,
            recon: rec.recon,
            task: rec.task,
            phase_reg: rec.phase_reg,
            total: rec.total,
            lr: rec.lr,
            test_metric,
        };
        eprintln!(
            "epoch {:3}  loss {:.5}  lr {:.2e}{}",
            rec.epoch,
            rec.total,
            rec.lr,
            test_metric.map(|t| format!("  test {t:.4}")).unwrap_or_default()
        );
        let mut write = || -> std::io::Result<()> {
            writeln!(history, "{}", serde_json::to_string(&line).expect("history serializes"))?;
            writeln!(
                timing,
                "{}",
                serde_json::to_string(&TimingLine {
                    epoch: rec.epoch,
                    wall_time_s: rec.wall_time_s,
                })
                .expect("timing serializes")
            )?;
            history.flush()?;
            timing.flush()
        };
        if let Err(e) = write() {
            io_err.get_or_insert(e.into());
        }
    });
    result?;
    if let Some(e) = io_err {
        return Err(e);
    }
    save_checkpoint(&model, cfg.out.join("model.ckpt"))?;
    test_set.save(cfg.out.join("test.holodata"))?;
    let metrics = evaluate_dataset(&model, &test_set)?;
    write_json(&cfg.out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Outcome> {
    let metrics = train_run(cfg)?;
    println!("{}", to_json(&metrics)?);
    Ok(threshold_outcome(&cfg.eval, &metrics))
}

fn load_pair(cfg: &RunConfig, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<(HoloModel, Dataset)> {
    let ck = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("model.ckpt"));
    let ds = dataset.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("test.holodata"));
    let model = load_checkpoint(&ck)?;
    let data = Dataset::load(&ds)?;
    check_compatible(&model.cfg, &data)?;
    Ok((model, data))
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<Outcome> {
    let (model, data) = load_pair(cfg, checkpoint, dataset)?;
    let metrics = evaluate_dataset(&model, &data)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("eval.json"), &metrics)?;
    println!("{}", to_json(&metrics)?);
    Ok(threshold_outcome(&cfg.eval, &metrics))
}

pub fn cmd_robustness(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    dataset: Option<&Path>,
    axis: NoiseAxis,
    grid: Option<&[f64]>,
) -> Result<Outcome> {
    let (model, data) = load_pair(cfg, checkpoint, dataset)?;
    let grid = grid.map(<[f64]>::to_vec).unwrap_or_else(|| match axis {
        NoiseAxis::Sigma => cfg.robustness.sigma_grid.clone(),
        NoiseAxis::Tau => cfg.robustness.tau_grid.clone(),
    });
    let rep = robustness_sweep(
        &model,
        &data,
        axis,
        &grid,
        cfg.robustness.noise_seed,
        cfg.robustness.per_token,
    )?;
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join(format!("robustness_{}.json", axis.name())), &rep)?;
    println!("{}", to_json(&rep)?);
    for i in 0..rep.grid.len() {
        eprintln!(
            "{} {:<6} {} {:.4}  change {:+.2}%",
            axis.name(),
            rep.grid[i],
            rep.metric_name,
            rep.metric[i],
            rep.rd_or_ri[i]
        );
    }
    eprintln!("RAUC {:.4}", rep.rauc);
    Ok(Outcome::Success)
}

pub fn cmd_report(root: &Path) -> Result<Outcome> {
    let report = write_report(root)?;
    for m in &report.missing {
        eprintln!("warning: run `{m}` has no metrics.json; left out of the tables");
    }
    for a in &report.ablation {
        println!("{}", to_json(a)?);
    }
    Ok(if report.runs.is_empty() {
        Outcome::Failed(format!("no completed runs under {}", root.display()))
    } else {
        Outcome::Success
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("holo").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn overrides_apply() {
        let cli = parse(&["verify", "--seed", "9", "--ablate", "coherent_sum", "--out", "x"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.verify.seed, 9);
        assert!(cfg.model.ablate_coherent_sum && cfg.verify.attention.ablate_coherent_sum);
        assert_eq!(cfg.out, PathBuf::from("x"));
    }

    #[test]
    fn grid_flag_parses_list() {
        let cli = parse(&["robustness", "--noise", "tau", "--grid", "0,0.1,0.3"]);
        match cli.command {
            Command::Robustness { noise, grid, .. } => {
                assert_eq!(noise, NoiseAxis::Tau);
                assert_eq!(grid.unwrap(), vec![0.0, 0.1, 0.3]);
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(Outcome::Success)), 0);
        assert_eq!(exit_code(&Ok(Outcome::Failed("x".into()))), 1);
        assert_eq!(exit_code(&Err(HoloError::Config("x".into()))), 2);
        assert_eq!(exit_code(&Err(HoloError::Data("x".into()))), 1);
    }

    #[test]
    fn thresholds() {
        let m = Metrics {
            n: 1,
            accuracy: Some(0.8),
            ..Metrics::default()
        };
        let spec = EvalSpec {
            min_accuracy: Some(0.9),
            ..EvalSpec::default()
        };
        assert!(matches!(threshold_outcome(&spec, &m), Outcome::Failed(_)));
        assert_eq!(threshold_outcome(&EvalSpec::default(), &m), Outcome::Success);
    }
}
