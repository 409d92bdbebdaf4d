use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig};
use crate::ctensor::ComplexMatrix;
use crate::error::{HoloError, Result};
use crate::model::{HoloModel, LossBreakdown, Target};

/// Learning-rate schedule, applied at the end of every epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Multiply by `gamma` every `step_size` epochs.
    Step { step_size: usize, gamma: f64 },
    /// Multiply by `factor` once the epoch loss has failed to improve for
    /// more than `patience` epochs.
    Plateau { patience: usize, factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            schedule: Schedule::Step {
                step_size: 5,
                gamma: 0.8,
            },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(HoloError::Config("batch_size must be positive".into()));
        }
        if !(self.adam.lr >= 0.0) || !(self.adam.eps > 0.0) {
            return Err(HoloError::Config("lr must be ≥ 0 and eps > 0".into()));
        }
        for b in [self.adam.beta1, self.adam.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(HoloError::Config(format!("beta {b} outside [0, 1)")));
            }
        }
        match self.schedule {
            Schedule::Step { step_size: 0, .. } => Err(HoloError::Config("step_size must be positive".into())),
            Schedule::Step { gamma: g, .. } | Schedule::Plateau { factor: g, .. } if !(g > 0.0 && g <= 1.0) => {
                Err(HoloError::Config(format!("decay factor {g} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// One line of training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub task: f64,
    pub phase_reg: f64,
    pub total: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub wall_time_s: f64,
}

struct Scheduler {
    schedule: Schedule,
    lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl Scheduler {
    fn new(schedule: Schedule, lr: f64) -> Self {
        Self {
            schedule,
            lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    fn end_epoch(&mut self, epoch: usize, loss: f64) {
        match self.schedule {
            Schedule::Constant => {}
            Schedule::Step { step_size, gamma } => {
                if (epoch + 1) % step_size == 0 {
                    self.lr *= gamma;
                }
            }
            Schedule::Plateau { patience, factor } => {
                // Relative improvement threshold of 1e-4.
                if loss < self.best * (1.0 - 1e-4) {
                    self.best = loss;
                    self.bad_epochs = 0;
                } else {
                    self.bad_epochs += 1;
                    if self.bad_epochs > patience {
                        self.lr *= factor;
                        self.bad_epochs = 0;
                    }
                }
            }
        }
    }
}

/// Mixes a base seed with a stream index so independent consumers get
/// independent, reproducible generators.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Minibatch Adam training. Calls `on_epoch` with the record and the updated
/// model after every epoch and returns the full history. Aborts with [`HoloError::NonFinite`] naming the first
/// non-finite tensor if a loss, gradient or parameter stops being finite.
pub fn train<F>(
    model: &mut HoloModel,
    inputs: &[ComplexMatrix],
    targets: &[Target],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochRecord>>
where
    F: FnMut(&EpochRecord, &HoloModel),
{
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(HoloError::Data("training set is empty".into()));
    }
    if inputs.len() != targets.len() {
        return Err(HoloError::Data(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut sched = Scheduler::new(cfg.schedule.clone(), cfg.adam.lr);
    let weights = model.cfg.effective_weights();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let lr = sched.lr;
        let mut seen = Vec::with_capacity(inputs.len());
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let b = model.accumulate_gradients(&inputs[i], &targets[i], Some(&mut dropout_rng), scale)?;
                seen.push(b);
            }
            if let Some(name) = model.store.first_non_finite() {
                return Err(HoloError::NonFinite(name));
            }
            adam_step(&mut model.store, &cfg.adam, lr);
            if let Some(name) = model.store.first_non_finite() {
                return Err(HoloError::NonFinite(name));
            }
        }
        let mean = LossBreakdown::mean(&seen, weights);
        let rec = EpochRecord {
            epoch,
            recon: mean.recon,
            task: mean.task,
            phase_reg: mean.phase_reg,
            total: mean.total,
            lr,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        sched.end_epoch(epoch, mean.total);
        on_epoch(&rec, model);
        history.push(rec);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctensor::C64;
    use crate::model::{ModelConfig, TaskKind};
    use rand::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            seq_len: 4,
            d_in: 2,
            d_model: 4,
            heads: 1,
            layers: 1,
            d_ff: 4,
            task: TaskKind::Classification { num_classes: 2 },
            ..ModelConfig::default()
        }
    }

    fn toy_data(n: usize, seed: u64) -> (Vec<ComplexMatrix>, Vec<Target>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let sign = if y == 0 { 1.0 } else { -1.0 };
            xs.push(ComplexMatrix::from_fn(4, 2, |_, _| {
                C64::new(sign + 0.3 * rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }));
            ys.push(Target::Class(y));
        }
        (xs, ys)
    }

    #[test]
    fn zero_lr_gives_flat_history() {
        let cfg = ModelConfig {
            dropout: 0.0,
            ..tiny_cfg()
        };
        let mut m = HoloModel::new(cfg, 1).unwrap();
        let before = m.store.clone();
        let (xs, ys) = toy_data(12, 2);
        let tc = TrainConfig {
            epochs: 4,
            batch_size: 5,
            adam: AdamConfig {
                lr: 0.0,
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let h = train(&mut m, &xs, &ys, &tc, |_, _| {}).unwrap();
        assert_eq!(h.len(), 4);
        for r in &h {
            assert!((r.total - h[0].total).abs() < 1e-12);
        }
        for (a, b) in m.store.iter().zip(before.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn same_seed_same_history() {
        let (xs, ys) = toy_data(20, 3);
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = HoloModel::new(tiny_cfg(), 5).unwrap();
            let h = train(&mut m, &xs, &ys, &tc, |_, _| {}).unwrap();
            h.into_iter()
                .map(|r| (r.recon.to_bits(), r.task.to_bits(), r.total.to_bits(), r.lr.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_schedule_decays() {
        let (xs, ys) = toy_data(4, 3);
        let tc = TrainConfig {
            epochs: 6,
            batch_size: 4,
            adam: AdamConfig {
                lr: 1.0e-3,
                ..AdamConfig::default()
            },
            schedule: Schedule::Step {
                step_size: 2,
                gamma: 0.5,
            },
            seed: 0,
        };
        let mut m = HoloModel::new(tiny_cfg(), 5).unwrap();
        let h = train(&mut m, &xs, &ys, &tc, |_, _| {}).unwrap();
        let lrs: Vec<f64> = h.iter().map(|r| r.lr).collect();
        assert_eq!(lrs, vec![1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4, 2.5e-4]);
    }

    #[test]
    fn plateau_schedule_reduces_after_patience() {
        let mut s = Scheduler::new(Schedule::Plateau { patience: 2, factor: 0.5 }, 1.0);
        for (e, l) in [1.0, 0.9, 0.9, 0.9, 0.9, 0.5].into_iter().enumerate() {
            s.end_epoch(e, l);
        }
        // Three non-improving epochs exceed patience 2.
        assert_eq!(s.lr, 0.5);
    }

    #[test]
    fn non_finite_input_aborts_with_name() {
        let mut m = HoloModel::new(tiny_cfg(), 1).unwrap();
        let (mut xs, ys) = toy_data(4, 1);
        xs[2].set(0, 0, C64::new(f64::NAN, 0.0));
        let err = train(&mut m, &xs, &ys, &TrainConfig { epochs: 1, ..TrainConfig::default() }, |_, _| {}).unwrap_err();
        match err {
            HoloError::NonFinite(name) => assert!(name.contains("input"), "{name}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let mut m = HoloModel::new(tiny_cfg(), 1).unwrap();
        assert!(train(&mut m, &[], &[], &TrainConfig::default(), |_, _| {}).is_err());
        let (xs, ys) = toy_data(2, 1);
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut m, &xs, &ys, &bad, |_, _| {}), Err(HoloError::Config(_))));
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
