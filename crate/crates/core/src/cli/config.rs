use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::TrainConfig;
use crate::error::{HoloError, Result};
use crate::model::{ModelConfig, TaskKind, Target};
use crate::synthdata::{gen_phase_classification_with, gen_phasor_prediction_with, Dataset, GeneratorParams, PhaseClassParams};
use crate::theory::SuiteConfig;

/// Where training and evaluation data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub n: usize,
    pub seed: u64,
    /// Leading fraction used for training; the rest is the test split.
    pub train_fraction: f64,
    /// Load a dataset container instead of generating.
    pub path: Option<PathBuf>,
    pub generator: GeneratorParams,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            n: 4000,
            seed: 1,
            train_fraction: 0.8,
            path: None,
            generator: GeneratorParams::PhaseClassification(PhaseClassParams::default()),
        }
    }
}

impl DataSpec {
    pub fn build(&self) -> Result<Dataset> {
        if let Some(p) = &self.path {
            return Dataset::load(p);
        }
        match &self.generator {
            GeneratorParams::PhaseClassification(p) => gen_phase_classification_with(self.n, p, self.seed),
            GeneratorParams::PhasorPrediction(p) => gen_phasor_prediction_with(self.n, p, self.seed),
            GeneratorParams::External { .. } => Err(HoloError::Config(
                "an external generator needs data.path".into(),
            )),
        }
    }
}

/// Pass/fail thresholds applied after training or evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub min_accuracy: Option<f64>,
    pub max_mae: Option<f64>,
    /// Record the test metric in the history after every epoch.
    pub track_test_metric: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessSpec {
    pub sigma_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub noise_seed: u64,
    /// One jitter draw per token instead of per entry.
    pub per_token: bool,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self {
            sigma_grid: vec![0.0, 0.1, 0.2, 0.4],
            tau_grid: vec![0.0, 0.02, 0.05, 0.10],
            noise_seed: 17,
            per_token: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSpec {
    /// Instances away from kinks to check per task head.
    pub per_head: usize,
    pub tol: f64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self { per_head: 5, tol: 1e-5 }
    }
}

/// Everything a command needs. Every section is optional in the file;
/// unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub data: DataSpec,
    pub train: TrainConfig,
    pub eval: EvalSpec,
    pub robustness: RobustnessSpec,
    pub verify: SuiteConfig,
    pub gradcheck: GradCheckSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            model: ModelConfig {
                seq_len: 16,
                d_in: 4,
                d_model: 32,
                heads: 2,
                layers: 2,
                d_ff: 64,
                task: TaskKind::Classification { num_classes: 4 },
                ..ModelConfig::default()
            },
            data: DataSpec::default(),
            train: TrainConfig::default(),
            eval: EvalSpec {
                track_test_metric: true,
                ..EvalSpec::default()
            },
            robustness: RobustnessSpec::default(),
            verify: SuiteConfig::default(),
            gradcheck: GradCheckSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HoloError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HoloError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HoloError::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(HoloError::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.data.train_fraction
            )));
        }
        Ok(())
    }
}

/// Checks that `ds` fits the model's input and output shapes.
pub fn check_compatible(model: &ModelConfig, ds: &Dataset) -> Result<()> {
    let x = ds
        .inputs
        .first()
        .ok_or_else(|| HoloError::Data("dataset is empty".into()))?;
    if x.rows() != model.seq_len || x.cols() != model.d_in {
        return Err(HoloError::Data(format!(
            "inputs are {}×{} but the model expects {}×{}",
            x.rows(),
            x.cols(),
            model.seq_len,
            model.d_in
        )));
    }
    match (&model.task, &ds.targets[0]) {
        (TaskKind::Classification { num_classes }, Target::Class(_)) => {
            if let Some(bad) = ds.targets.iter().find_map(|t| match t {
                Target::Class(c) if c >= num_classes => Some(*c),
                _ => None,
            }) {
                return Err(HoloError::Data(format!("label {bad} outside {num_classes} classes")));
            }
            Ok(())
        }
        (TaskKind::Regression { d_out, horizon }, Target::Sequence(y)) => {
            if y.rows() != *horizon || y.cols() != *d_out {
                return Err(HoloError::Data(format!(
                    "targets are {}×{} but the model predicts {horizon}×{d_out}",
                    y.rows(),
                    y.cols()
                )));
            }
            Ok(())
        }
        _ => Err(HoloError::Data("dataset targets do not match the model's task head".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 3\n[model]\nd_model = 8\nd_ff = 8\n[train]\nepochs = 2\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.d_model, 8);
        assert_eq!(cfg.model.heads, ModelConfig::default().heads);
        assert_eq!(cfg.train.epochs, 2);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(RunConfig::from_toml("sed = 3"), Err(HoloError::Config(_))));
        assert!(matches!(
            RunConfig::from_toml("[model]\nd_modle = 8"),
            Err(HoloError::Config(_))
        ));
        assert!(RunConfig::from_toml("[data.generator]\ngenerator = \"phase_classification\"\nnoise = 1.0").is_err());
    }

    #[test]
    fn generator_sections_parse() {
        let text = "[data]\nn = 10\n[data.generator]\ngenerator = \"phasor_prediction\"\nd = 2\nn_phasors = 1\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let GeneratorParams::PhasorPrediction(p) = &cfg.data.generator else {
            panic!("wrong generator");
        };
        assert_eq!((p.d, p.n_phasors, p.t_in), (2, 1, 12));
    }

    #[test]
    fn compatibility_checks() {
        let cfg = RunConfig::default();
        let ds = gen_phase_classification_with(8, &PhaseClassParams::default(), 1).unwrap();
        check_compatible(&cfg.model, &ds).unwrap();
        let small = ModelConfig {
            task: TaskKind::Classification { num_classes: 2 },
            ..cfg.model.clone()
        };
        assert!(check_compatible(&small, &ds).is_err());
        let wrong_t = ModelConfig {
            seq_len: 8,
            ..cfg.model
        };
        assert!(check_compatible(&wrong_t, &ds).is_err());
    }
}
