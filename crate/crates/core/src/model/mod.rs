//! Complex encoder with a dual-headed decoder: embedding with complex
//! sinusoidal positions, stacked holographic encoder layers, an input
//! reconstruction head and a task head, plus every loss term of the joint
//! objective.

mod checkpoint;
mod network;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use network::{ForwardNodes, HoloModel, LayerIds, LossNodes};

use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::ctensor::{angle, phasor, wrap_angle, ComplexMatrix, C64};
use crate::error::{dim_err, HoloError, Result};

/// What the task head predicts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskKind {
    Classification { num_classes: usize },
    Regression { d_out: usize, horizon: usize },
}

fn default_true() -> bool {
    true
}

/// Hyperparameters and ablation switches of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub d_in: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub alpha: f64,
    pub attn_eps: f64,
    pub ln_eps: f64,
    pub lambda_r: f64,
    pub lambda_t: f64,
    pub lambda_p: f64,
    pub task: TaskKind,
    pub dropout: f64,
    #[serde(default)]
    pub ablate_phase_decay: bool,
    #[serde(default)]
    pub ablate_coherent_sum: bool,
    #[serde(default)]
    pub ablate_reconstruction: bool,
    /// Feed `|X|` instead of `X` (phase-blind ingestion).
    #[serde(default)]
    pub magnitude_only: bool,
    #[serde(default = "default_true")]
    pub positional_encoding: bool,
    #[serde(default)]
    pub additive_gamma: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 16,
            d_in: 4,
            d_model: 16,
            heads: 2,
            layers: 1,
            d_ff: 32,
            alpha: 1.0,
            attn_eps: 1e-8,
            ln_eps: 1e-5,
            lambda_r: 1.0,
            lambda_t: 1.0,
            lambda_p: 0.01,
            task: TaskKind::Classification { num_classes: 4 },
            dropout: 0.1,
            ablate_phase_decay: false,
            ablate_coherent_sum: false,
            ablate_reconstruction: false,
            magnitude_only: false,
            positional_encoding: true,
            additive_gamma: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoloError::Config(m));
        if self.seq_len == 0 || self.d_in == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("seq_len, d_in, d_model and d_ff must be positive".into());
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            ));
        }
        for (name, v) in [
            ("lambda_r", self.lambda_r),
            ("lambda_t", self.lambda_t),
            ("lambda_p", self.lambda_p),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.lambda_r + self.lambda_t <= 0.0 {
            return bad("lambda_r + lambda_t must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.ln_eps > 0.0) {
            return bad(format!("ln_eps must be positive, got {}", self.ln_eps));
        }
        match self.task {
            TaskKind::Classification { num_classes } if num_classes == 0 => {
                return bad("num_classes must be positive".into())
            }
            TaskKind::Regression { d_out, horizon } if d_out == 0 || horizon == 0 => {
                return bad("d_out and horizon must be positive".into())
            }
            _ => {}
        }
        self.attention().validate()
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            heads: self.heads,
            alpha: self.alpha,
            eps: self.attn_eps,
            ablate_phase_decay: self.ablate_phase_decay,
            ablate_coherent_sum: self.ablate_coherent_sum,
            additive_gamma: self.additive_gamma,
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    /// Loss weights actually applied, after the reconstruction ablation.
    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            recon: if self.ablate_reconstruction { 0.0 } else { self.lambda_r },
            task: self.lambda_t,
            phase: self.lambda_p,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recon: f64,
    pub task: f64,
    pub phase: f64,
}

/// Loss terms for one sample or batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub task: f64,
    pub phase_reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, task: f64, phase_reg: f64, w: LossWeights) -> Self {
        Self {
            recon,
            task,
            phase_reg,
            total: w.recon * recon + w.task * task + w.phase * phase_reg,
        }
    }

    /// Component-wise mean, with the total recombined from the means.
    pub fn mean(items: &[LossBreakdown], w: LossWeights) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let s = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::new(s(|b| b.recon), s(|b| b.task), s(|b| b.phase_reg), w)
    }
}

/// Supervision for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Sequence(ComplexMatrix),
}

/// Task head output.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskOutput {
    Logits(Vec<f64>),
    Prediction(ComplexMatrix),
}

/// `PE[t, k] = exp(j·t·ω_k)` with `ω_k = 10000^(−k/d_model)`.
pub fn positional_encoding(t_len: usize, d_model: usize) -> ComplexMatrix {
    let omegas: Vec<f64> = (0..d_model)
        .map(|k| 10000f64.powf(-(k as f64) / d_model as f64))
        .collect();
    ComplexMatrix::from_fn(t_len, d_model, |t, k| phasor(t as f64 * omegas[k]))
}

/// `X·W_e + PE`.
pub fn embed(x: &ComplexMatrix, w_e: &ComplexMatrix) -> Result<ComplexMatrix> {
    let z = x.matmul(w_e)?;
    z.add(&positional_encoding(z.rows(), z.cols()))
}

/// ReLU on real and imaginary parts separately.
pub fn split_relu(z: C64) -> C64 {
    C64::new(z.re.max(0.0), z.im.max(0.0))
}

/// Two complex affine maps with a split-complex ReLU in between.
pub fn complex_ffn(
    z: &ComplexMatrix,
    w1: &ComplexMatrix,
    b1: &[C64],
    w2: &ComplexMatrix,
    b2: &[C64],
) -> Result<ComplexMatrix> {
    let h = z.matmul(w1)?.add_row_vector(b1)?.map(split_relu);
    h.matmul(w2)?.add_row_vector(b2)
}

/// Linear map from encoder output back to the input shape.
pub fn recon_head(z_l: &ComplexMatrix, w_r: &ComplexMatrix) -> Result<ComplexMatrix> {
    z_l.matmul(w_r)
}

/// Pooled feature row consumed by the task head.
///
/// Classification mean-pools over time and concatenates real and imaginary
/// parts; regression flattens the whole sequence.
pub fn task_features(z_l: &ComplexMatrix, task: &TaskKind) -> ComplexMatrix {
    match task {
        TaskKind::Classification { .. } => {
            let p = z_l.mean_rows();
            let d = p.cols();
            ComplexMatrix::from_fn(1, 2 * d, |_, j| {
                let z = p.get(0, j % d);
                C64::new(if j < d { z.re } else { z.im }, 0.0)
            })
        }
        TaskKind::Regression { .. } => z_l
            .clone()
            .reshape(1, z_l.len())
            .expect("flatten preserves length"),
    }
}

/// Task head: real logits for classification, `horizon × d_out` complex
/// predictions for regression.
pub fn task_head(z_l: &ComplexMatrix, task: &TaskKind, w_t: &ComplexMatrix, b_t: &ComplexMatrix) -> Result<TaskOutput> {
    let f = task_features(z_l, task);
    let out = f.matmul(w_t)?;
    if b_t.shape() != out.shape() {
        return Err(dim_err(
            "task_head",
            format!("bias {:?} for output {:?}", b_t.shape(), out.shape()),
        ));
    }
    let out = out.add(b_t)?;
    match task {
        TaskKind::Classification { num_classes } => {
            if out.cols() != *num_classes {
                return Err(dim_err("task_head", "logit count differs from num_classes"));
            }
            Ok(TaskOutput::Logits(out.data().iter().map(|z| z.re).collect()))
        }
        TaskKind::Regression { d_out, horizon } => {
            Ok(TaskOutput::Prediction(out.reshape(*horizon, *d_out)?))
        }
    }
}

/// Mean over entries of `Re(X̂−X)² + Im(X̂−X)²`.
pub fn recon_loss(x_hat: &ComplexMatrix, x: &ComplexMatrix) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(dim_err(
            "recon_loss",
            format!("{:?} vs {:?}", x_hat.shape(), x.shape()),
        ));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = x_hat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| {
            let d = a - b;
            d.re * d.re + d.im * d.im
        })
        .sum();
    Ok(s / x.len() as f64)
}

/// Softmax cross-entropy (natural log) of one logit row.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(HoloError::Data(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Task loss for one sample: cross-entropy or mean squared complex error.
pub fn task_loss(pred: &TaskOutput, target: &Target) -> Result<f64> {
    match (pred, target) {
        (TaskOutput::Logits(l), Target::Class(y)) => cross_entropy(l, *y),
        (TaskOutput::Prediction(p), Target::Sequence(y)) => recon_loss(p, y),
        _ => Err(HoloError::Data("target kind does not match task head".into())),
    }
}

/// Mean wrapped L1 phase increment between consecutive rows of `z`.
pub fn phase_reg(z: &ComplexMatrix) -> f64 {
    let (t_len, d) = z.shape();
    if t_len < 2 || d == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for t in 0..t_len - 1 {
        for c in 0..d {
            s += wrap_angle(angle(z.get(t + 1, c)) - angle(z.get(t, c))).abs();
        }
    }
    s / ((t_len - 1) * d) as f64
}

/// Weighted objective from already-computed terms.
pub fn total_loss(recon: f64, task: f64, phase: f64, cfg: &ModelConfig) -> LossBreakdown {
    LossBreakdown::new(recon, task, phase, cfg.effective_weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn positional_encoding_examples() {
        let pe = positional_encoding(4, 2);
        assert_eq!(pe.get(0, 0), c(1.0, 0.0));
        assert_eq!(pe.get(0, 1), c(1.0, 0.0));
        assert!((pe.get(1, 0) - c(1f64.cos(), 1f64.sin())).norm() < 1e-15);
        assert!((pe.get(1, 0) - c(0.5403, 0.8415)).norm() < 1e-4);
        let big = positional_encoding(50, 7);
        assert!(big.data().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn embed_examples() {
        let w = ComplexMatrix::from_fn(3, 5, |i, j| c(i as f64 - j as f64, 0.5));
        let z = embed(&ComplexMatrix::zeros(4, 3), &w).unwrap();
        assert_eq!(z, positional_encoding(4, 5));

        let x = ComplexMatrix::from_fn(4, 3, |i, j| c(i as f64, j as f64 * 0.5));
        let z = embed(&x, &ComplexMatrix::identity(3)).unwrap();
        let back = z.sub(&positional_encoding(4, 3)).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-15);

        let x = ComplexMatrix::new(1, 1, vec![c(2.0, 0.0)]).unwrap();
        let w = ComplexMatrix::new(1, 1, vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(x.matmul(&w).unwrap().get(0, 0), c(0.0, 2.0));
        assert!(embed(&x, &ComplexMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn ffn_examples() {
        let z = ComplexMatrix::zeros(3, 2);
        let w1 = ComplexMatrix::from_fn(2, 4, |i, j| c(i as f64 + 1.0, j as f64));
        let w2 = ComplexMatrix::from_fn(4, 2, |i, j| c(j as f64, -(i as f64)));
        let out = complex_ffn(&z, &w1, &[c(0.0, 0.0); 4], &w2, &[c(0.0, 0.0); 2]).unwrap();
        assert!(out.max_abs() == 0.0);

        let x = ComplexMatrix::from_fn(3, 2, |i, j| c(1.0 + i as f64, 0.5 + j as f64));
        let id = ComplexMatrix::identity(2);
        let zero = [c(0.0, 0.0); 2];
        assert_eq!(complex_ffn(&x, &id, &zero, &id, &zero).unwrap(), x);

        assert_eq!(split_relu(c(-1.0, -1.0)), c(0.0, 0.0));
        assert!(complex_ffn(&x, &ComplexMatrix::identity(3), &zero, &id, &zero).is_err());
    }

    #[test]
    fn recon_head_shapes() {
        let z = ComplexMatrix::from_fn(5, 8, |i, j| c(i as f64, j as f64));
        let out = recon_head(&z, &ComplexMatrix::zeros(8, 3)).unwrap();
        assert_eq!(out.shape(), (5, 3));
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn task_head_examples() {
        let task = TaskKind::Classification { num_classes: 3 };
        let z = ComplexMatrix::zeros(4, 2);
        let out = task_head(&z, &task, &ComplexMatrix::zeros(4, 3), &ComplexMatrix::zeros(1, 3)).unwrap();
        let TaskOutput::Logits(l) = out else { panic!() };
        assert_eq!(l, vec![0.0; 3]);
        let p = crate::attention::softmax_vec(&l);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));

        let one = TaskKind::Classification { num_classes: 1 };
        let out = task_head(&z, &one, &ComplexMatrix::zeros(4, 1), &ComplexMatrix::zeros(1, 1)).unwrap();
        assert_eq!(out, TaskOutput::Logits(vec![0.0]));

        let z = ComplexMatrix::new(1, 1, vec![c(1.0, 2.0)]).unwrap();
        let f = task_features(&z, &task);
        assert_eq!(f.data(), &[c(1.0, 0.0), c(2.0, 0.0)]);

        let reg = TaskKind::Regression { d_out: 2, horizon: 3 };
        let z = ComplexMatrix::zeros(4, 2);
        let out = task_head(&z, &reg, &ComplexMatrix::zeros(8, 6), &ComplexMatrix::zeros(1, 6)).unwrap();
        let TaskOutput::Prediction(p) = out else { panic!() };
        assert_eq!(p.shape(), (3, 2));
        assert!(task_head(&z, &reg, &ComplexMatrix::zeros(7, 6), &ComplexMatrix::zeros(1, 6)).is_err());
    }

    #[test]
    fn recon_loss_examples() {
        let x = ComplexMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64));
        assert_eq!(recon_loss(&x, &x).unwrap(), 0.0);
        let zero = ComplexMatrix::zeros(1, 1);
        let one = ComplexMatrix::new(1, 1, vec![c(1.0, 1.0)]).unwrap();
        assert_eq!(recon_loss(&one, &zero).unwrap(), 2.0);
        let y = x.map(|z| z * c(0.3, -1.0) + c(0.1, 0.2));
        let a = recon_loss(&y, &x).unwrap();
        let b = recon_loss(&y.rotate(1.3), &x.rotate(1.3)).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        assert!(recon_loss(&x, &zero).is_err());
    }

    #[test]
    fn task_loss_examples() {
        let ce = task_loss(&TaskOutput::Logits(vec![0.3; 4]), &Target::Class(2)).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-15);
        assert!((ce - 1.3863).abs() < 1e-4);
        let y = ComplexMatrix::from_fn(3, 2, |i, j| c(i as f64, -(j as f64)));
        let reg = task_loss(&TaskOutput::Prediction(y.clone()), &Target::Sequence(y)).unwrap();
        assert_eq!(reg, 0.0);
        let sharp = task_loss(&TaskOutput::Logits(vec![0.0, 50.0, 0.0]), &Target::Class(1)).unwrap();
        assert!(sharp < 1e-20);
        assert!(matches!(
            task_loss(&TaskOutput::Logits(vec![0.0; 2]), &Target::Class(2)),
            Err(HoloError::Data(_))
        ));
    }

    #[test]
    fn phase_reg_examples() {
        let z = ComplexMatrix::from_fn(5, 3, |t, c| phasor(0.4 * c as f64) * (1.0 + t as f64));
        assert_eq!(phase_reg(&z), 0.0);
        let z = ComplexMatrix::from_rows(&[vec![phasor(0.0)], vec![phasor(PI / 2.0)], vec![phasor(PI)]]).unwrap();
        assert!((phase_reg(&z) - PI / 2.0).abs() < 1e-12);
        let z = ComplexMatrix::from_rows(&[vec![phasor(PI - 0.1)], vec![phasor(-PI + 0.1)]]).unwrap();
        assert!((phase_reg(&z) - 0.2).abs() < 1e-12);
        assert_eq!(phase_reg(&ComplexMatrix::from_fn(1, 4, |_, c| phasor(c as f64))), 0.0);
    }

    #[test]
    fn phase_reg_rotation_invariant() {
        let z = ComplexMatrix::from_fn(6, 4, |t, c| c_from(t, c));
        for theta in [0.3, -2.9, 3.1] {
            assert!((phase_reg(&z) - phase_reg(&z.rotate(theta))).abs() < 1e-10);
        }
    }

    fn c_from(t: usize, c: usize) -> C64 {
        C64::new((t as f64 * 1.7 + c as f64).sin(), (t as f64 * 0.3 - c as f64 * 2.1).cos())
    }

    #[test]
    fn total_loss_weights() {
        let cfg = ModelConfig {
            lambda_r: 1.0,
            lambda_t: 0.0,
            lambda_p: 0.0,
            ..ModelConfig::default()
        };
        assert_eq!(total_loss(0.0, 5.0, 3.0, &cfg).total, 0.0);
        let cfg = ModelConfig {
            lambda_r: 0.5,
            lambda_t: 2.0,
            lambda_p: 0.0,
            ..ModelConfig::default()
        };
        assert_eq!(total_loss(2.0, 1.0, 9.0, &cfg).total, 3.0);
        let ablated = ModelConfig {
            ablate_reconstruction: true,
            ..cfg
        };
        assert_eq!(total_loss(2.0, 1.0, 9.0, &ablated).total, 2.0);
        let cfg = ModelConfig::default();
        let b = total_loss(0.37, 1.9, 0.2, &cfg);
        assert!((b.total - (cfg.lambda_r * b.recon + cfg.lambda_t * b.task + cfg.lambda_p * b.phase_reg)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            lambda_r: 0.0,
            lambda_t: 0.0,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            lambda_p: -0.1,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
