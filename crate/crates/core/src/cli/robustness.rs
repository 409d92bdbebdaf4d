use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Metrics};
use crate::error::{HoloError, Result};
use crate::model::HoloModel;
use crate::synthdata::{Dataset, NoiseSpec};

/// Which corruption the sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseAxis {
    /// Phase jitter, radians.
    Sigma,
    /// Relative amplitude noise.
    Tau,
}

impl NoiseAxis {
    pub fn name(self) -> &'static str {
        match self {
            NoiseAxis::Sigma => "sigma",
            NoiseAxis::Tau => "tau",
        }
    }
}

/// Metric-vs-noise curve with relative change and area summaries.
///
/// For accuracy, `rd_or_ri` is the relative degradation
/// `100·(clean − noisy)/clean` and the curve integrated for `rauc` is
/// `noisy/clean`. For MAE it is the relative increase
/// `100·(noisy − clean)/clean` and the curve is `clean/noisy`. Either way a
/// model unaffected by noise scores `rauc = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub task: String,
    pub axis: NoiseAxis,
    pub grid: Vec<f64>,
    /// `"accuracy"` or `"mae"`.
    pub metric_name: String,
    pub metric: Vec<f64>,
    pub clean: f64,
    pub rd_or_ri: Vec<f64>,
    pub rauc: f64,
    /// Full metrics per level.
    pub details: Vec<Metrics>,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(HoloError::Config("noise grid is empty".into()));
    }
    if grid[0] != 0.0 {
        return Err(HoloError::Config(format!("noise grid must start at 0, got {}", grid[0])));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
        return Err(HoloError::Config("noise grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

/// Relative changes (percent) and span-normalized trapezoid area of the
/// ratio curve. A single-point grid has area 1.
pub fn summarize(grid: &[f64], metric: &[f64], higher_is_better: bool) -> Result<(Vec<f64>, f64)> {
    validate_grid(grid)?;
    if metric.len() != grid.len() {
        return Err(HoloError::Data(format!(
            "{} metric values for {} grid points",
            metric.len(),
            grid.len()
        )));
    }
    let clean = metric[0];
    let change: Vec<f64> = metric
        .iter()
        .map(|&m| {
            let delta = if higher_is_better { clean - m } else { m - clean };
            if delta == 0.0 {
                0.0
            } else {
                100.0 * delta / clean
            }
        })
        .collect();
    let curve: Vec<f64> = metric
        .iter()
        .map(|&m| if higher_is_better { ratio(m, clean) } else { ratio(clean, m) })
        .collect();
    if grid.len() == 1 {
        return Ok((change, curve[0]));
    }
    // Integrate the shortfall `1 − curve` so a flat curve gives exactly 1.
    let mut deficit = 0.0;
    for i in 1..grid.len() {
        deficit += 0.5 * ((1.0 - curve[i]) + (1.0 - curve[i - 1])) * (grid[i] - grid[i - 1]);
    }
    Ok((change, 1.0 - deficit / (grid[grid.len() - 1] - grid[0])))
}

/// Evaluates `model` on `ds` corrupted at every grid level. Noise draws
/// depend only on `(seed, sample index)`, so every level sees the same
/// underlying perturbation directions. Levels are evaluated on scoped
/// threads and collected in grid order.
pub fn robustness_sweep(
    model: &HoloModel,
    ds: &Dataset,
    axis: NoiseAxis,
    grid: &[f64],
    seed: u64,
    per_token: bool,
) -> Result<RobustnessReport> {
    validate_grid(grid)?;
    let eval_level = |level: f64| -> Result<Metrics> {
        let spec = NoiseSpec {
            sigma: if axis == NoiseAxis::Sigma { level } else { 0.0 },
            tau: if axis == NoiseAxis::Tau { level } else { 0.0 },
            seed,
            per_token,
            additive: false,
        };
        let noisy = ds.with_noise(&spec)?;
        evaluate(model, &noisy.inputs, &noisy.targets)
    };
    let results: Vec<Result<Metrics>> = std::thread::scope(|s| {
        let handles: Vec<_> = grid.iter().map(|&l| s.spawn(move || eval_level(l))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(HoloError::Data("evaluation thread panicked".into()))))
            .collect()
    });
    let details = results.into_iter().collect::<Result<Vec<_>>>()?;
    let classification = details[0].is_classification();
    let metric: Vec<f64> = details.iter().map(Metrics::primary).collect();
    let (rd_or_ri, rauc) = summarize(grid, &metric, classification)?;
    Ok(RobustnessReport {
        task: ds.meta.task.clone(),
        axis,
        grid: grid.to_vec(),
        metric_name: if classification { "accuracy" } else { "mae" }.into(),
        clean: metric[0],
        metric,
        rd_or_ri,
        rauc,
        details,
    })
}
