//! Consolidates run directories into CSV tables and plot data.
//!
//! A run directory is any immediate subdirectory holding `config.toml`.
//! Outputs, written to the parent directory:
//!
//! * `table_main.csv`: one row per run with its test metrics.
//! * `table_robustness.csv`: one row per run, noise axis and level.
//! * `table_ablation.csv`: one row per (task, variant), averaged over seeds,
//!   with the change relative to the full model.
//! * `plot_data.csv`: `(x, y, series)` triples for loss curves, per-epoch test
//!   metrics and robustness curves.
//! * `report.json`: everything above as structured data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::Metrics;
use super::robustness::RobustnessReport;
use super::HistoryLine;
use crate::error::{HoloError, Result};
use crate::model::{ModelConfig, TaskKind};

/// Short label of the ablation state of a model.
pub fn variant_name(m: &ModelConfig) -> String {
    let mut parts = Vec::new();
    if m.magnitude_only {
        parts.push("magnitude only");
    }
    if m.ablate_phase_decay {
        parts.push("w/o phase decay");
    }
    if m.ablate_coherent_sum {
        parts.push("w/o coherent sum");
    }
    if m.ablate_reconstruction {
        parts.push("w/o reconstruction");
    }
    if parts.is_empty() {
        "full".into()
    } else {
        parts.join(" + ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub metrics: Metrics,
    pub history: Vec<HistoryLine>,
    pub robustness: Vec<RobustnessReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub task: String,
    pub variant: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    /// `full − variant` in points for accuracy, `variant − full` for MAE, so
    /// positive always means the variant is worse. `None` without a full run.
    pub delta_vs_full: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub ablation: Vec<AblationRow>,
    /// Run directories without test metrics.
    pub missing: Vec<String>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| HoloError::Format(format!("{}: {e}", path.display())))
}

fn task_name(task: &TaskKind) -> &'static str {
    match task {
        TaskKind::Classification { .. } => "classification",
        TaskKind::Regression { .. } => "regression",
    }
}

fn load_run(dir: &Path, name: &str) -> Result<Option<RunSummary>> {
    let cfg = RunConfig::load(&dir.join("config.toml"))?;
    let metrics_path = dir.join("metrics.json");
    if !metrics_path.exists() {
        return Ok(None);
    }
    let metrics: Metrics = read_json(&metrics_path)?;
    let history = match std::fs::read_to_string(dir.join("history.jsonl")) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| HoloError::Format(format!("history: {e}"))))
            .collect::<Result<Vec<HistoryLine>>>()?,
        Err(_) => Vec::new(),
    };
    let mut robustness = Vec::new();
    for axis in ["sigma", "tau"] {
        let p = dir.join(format!("robustness_{axis}.json"));
        if p.exists() {
            robustness.push(read_json(&p)?);
        }
    }
    Ok(Some(RunSummary {
        run: name.into(),
        task: task_name(&cfg.model.task).into(),
        variant: variant_name(&cfg.model),
        seed: cfg.seed,
        metrics,
        history,
        robustness,
    }))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn ablation_table(runs: &[RunSummary]) -> Vec<AblationRow> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.task.clone(), r.variant.clone()))
            .or_default()
            .push(r.metrics.primary());
    }
    let full: BTreeMap<String, f64> = groups
        .iter()
        .filter(|((_, v), _)| v == "full")
        .map(|((t, _), xs)| (t.clone(), mean_std(xs).0))
        .collect();
    // Full first, then the rest alphabetically.
    let mut rows: Vec<AblationRow> = groups
        .into_iter()
        .map(|((task, variant), xs)| {
            let (mean, std) = mean_std(&xs);
            let delta_vs_full = full.get(&task).map(|f| {
                if task == "classification" {
                    100.0 * (f - mean)
                } else {
                    mean - f
                }
            });
            AblationRow {
                task,
                variant,
                runs: xs.len(),
                mean,
                std,
                delta_vs_full,
            }
        })
        .collect();
    rows.sort_by(|a, b| (&a.task, a.variant != "full", &a.variant).cmp(&(&b.task, b.variant != "full", &b.variant)));
    rows
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads every run under `root`. Runs without metrics are listed in
/// `missing` instead of failing the whole report.
pub fn collect(root: &Path) -> Result<Report> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("config.toml").is_file())
        .collect();
    dirs.sort();
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for d in dirs {
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match load_run(&d, &name)? {
            Some(r) => runs.push(r),
            None => missing.push(name),
        }
    }
    let ablation = ablation_table(&runs);
    Ok(Report { runs, ablation, missing })
}

pub fn main_table(report: &Report) -> String {
    let mut s = String::from("run,task,variant,seed,n,accuracy,macro_f1,micro_f1,mae,rmse\n");
    for r in &report.runs {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.run),
            r.task,
            csv_field(&r.variant),
            r.seed,
            m.n,
            opt(m.accuracy),
            opt(m.macro_f1),
            opt(m.micro_f1),
            opt(m.mae),
            opt(m.rmse)
        );
    }
    s
}

pub fn robustness_table(report: &Report) -> String {
    let mut s = String::from("run,variant,seed,axis,level,metric_name,metric,rd_or_ri,rauc\n");
    for r in &report.runs {
        for rob in &r.robustness {
            for i in 0..rob.grid.len() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    csv_field(&r.run),
                    csv_field(&r.variant),
                    r.seed,
                    rob.axis.name(),
                    rob.grid[i],
                    rob.metric_name,
                    rob.metric[i],
                    rob.rd_or_ri[i],
                    rob.rauc
                );
            }
        }
    }
    s
}

pub fn ablation_csv(report: &Report) -> String {
    let mut s = String::from("task,variant,runs,mean,std,delta_vs_full\n");
    for a in &report.ablation {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            a.task,
            csv_field(&a.variant),
            a.runs,
            a.mean,
            a.std,
            opt(a.delta_vs_full)
        );
    }
    s
}

pub fn plot_data(report: &Report) -> String {
    let mut s = String::from("x,y,series\n");
    for r in &report.runs {
        let run = csv_field(&r.run);
        for h in &r.history {
            let _ = writeln!(s, "{},{},{run}/loss", h.epoch, h.total);
            if let Some(m) = h.test_metric {
                let _ = writeln!(s, "{},{m},{run}/test_metric", h.epoch);
            }
        }
        for rob in &r.robustness {
            for (x, y) in rob.grid.iter().zip(&rob.metric) {
                let _ = writeln!(s, "{x},{y},{run}/robustness_{}", rob.axis.name());
            }
        }
    }
    s
}

/// Writes all tables into `root` and returns the report.
pub fn write_report(root: &Path) -> Result<Report> {
    let report = collect(root)?;
    std::fs::write(root.join("table_main.csv"), main_table(&report))?;
    std::fs::write(root.join("table_robustness.csv"), robustness_table(&report))?;
    std::fs::write(root.join("table_ablation.csv"), ablation_csv(&report))?;
    std::fs::write(root.join("plot_data.csv"), plot_data(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| HoloError::Format(e.to_string()))?;
    std::fs::write(root.join("report.json"), json + "\n")?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(variant: &str, seed: u64, acc: f64) -> RunSummary {
        RunSummary {
            run: format!("{variant}_{seed}"),
            task: "classification".into(),
            variant: variant.into(),
            seed,
            metrics: Metrics {
                n: 10,
                accuracy: Some(acc),
                ..Metrics::default()
            },
            history: Vec::new(),
            robustness: Vec::new(),
        }
    }

    #[test]
    fn variant_labels() {
        let mut m = ModelConfig::default();
        assert_eq!(variant_name(&m), "full");
        m.ablate_coherent_sum = true;
        assert_eq!(variant_name(&m), "w/o coherent sum");
        m.ablate_reconstruction = true;
        assert_eq!(variant_name(&m), "w/o coherent sum + w/o reconstruction");
    }

    #[test]
    fn ablation_rows_average_seeds() {
        let runs = vec![
            run("w/o phase decay", 0, 0.7),
            run("full", 0, 0.9),
            run("full", 1, 0.8),
            run("w/o phase decay", 1, 0.6),
        ];
        let rows = ablation_table(&runs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variant, "full");
        assert!((rows[0].mean - 0.85).abs() < 1e-12);
        assert!((rows[1].delta_vs_full.unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
