use serde::{Deserialize, Serialize};

use crate::ctensor::ComplexMatrix;
use crate::error::{HoloError, Result};
use crate::model::{HoloModel, TaskOutput, Target};
use crate::synthdata::Dataset;

/// Evaluation metrics. Classification fills the first three, regression the
/// last two.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
}

impl Metrics {
    /// Accuracy for classification, MAE for regression.
    pub fn primary(&self) -> f64 {
        self.accuracy.or(self.mae).unwrap_or(f64::NAN)
    }

    pub fn is_classification(&self) -> bool {
        self.accuracy.is_some()
    }
}

/// Accuracy, macro-F1 and micro-F1 from the confusion matrix. A class with
/// no true and no predicted members has F1 0.
pub fn classification_metrics(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(HoloError::Data(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(HoloError::Data(format!("label {} outside {num_classes} classes", p.max(t))));
        }
        confusion[t][p] += 1;
    }
    let n = pred.len();
    let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    let mut f1_sum = 0.0;
    for k in 0..num_classes {
        let tp = confusion[k][k];
        let fp: usize = (0..num_classes).filter(|&t| t != k).map(|t| confusion[t][k]).sum();
        let fneg: usize = (0..num_classes).filter(|&p| p != k).map(|p| confusion[k][p]).sum();
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
        let denom = 2 * tp + fp + fneg;
        f1_sum += if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    let micro_denom = 2 * tp_all + fp_all + fn_all;
    Ok(Metrics {
        n,
        accuracy: Some(correct as f64 / n as f64),
        macro_f1: Some(f1_sum / num_classes as f64),
        micro_f1: Some(if micro_denom == 0 {
            0.0
        } else {
            2.0 * tp_all as f64 / micro_denom as f64
        }),
        ..Metrics::default()
    })
}

/// MAE and RMSE of the element-wise moduli `|ŷ − y|`.
pub fn regression_metrics(pred: &[ComplexMatrix], truth: &[ComplexMatrix]) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(HoloError::Data(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        let diff = p.sub(t)?;
        for z in diff.data() {
            abs_sum += z.norm();
            sq_sum += z.norm_sqr();
            count += 1;
        }
    }
    Ok(Metrics {
        n: pred.len(),
        mae: Some(abs_sum / count as f64),
        rmse: Some((sq_sum / count as f64).sqrt()),
        ..Metrics::default()
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Evaluation-mode metrics of `model` on `inputs`/`targets`.
pub fn evaluate(model: &HoloModel, inputs: &[ComplexMatrix], targets: &[Target]) -> Result<Metrics> {
    match targets.first() {
        None => Err(HoloError::Data("evaluation set is empty".into())),
        Some(Target::Class(_)) => {
            let k = match model.cfg.task {
                crate::model::TaskKind::Classification { num_classes } => num_classes,
                _ => return Err(HoloError::Data("class labels given to a regression model".into())),
            };
            let mut pred = Vec::with_capacity(inputs.len());
            let mut truth = Vec::with_capacity(inputs.len());
            for (x, t) in inputs.iter().zip(targets) {
                let Target::Class(c) = t else {
                    return Err(HoloError::Data("mixed target kinds".into()));
                };
                match model.predict(x)? {
                    TaskOutput::Logits(l) => pred.push(argmax(&l)),
                    TaskOutput::Prediction(_) => unreachable!("classification model"),
                }
                truth.push(*c);
            }
            classification_metrics(&pred, &truth, k)
        }
        Some(Target::Sequence(_)) => {
            let mut pred = Vec::with_capacity(inputs.len());
            let mut truth = Vec::with_capacity(inputs.len());
            for (x, t) in inputs.iter().zip(targets) {
                let Target::Sequence(y) = t else {
                    return Err(HoloError::Data("mixed target kinds".into()));
                };
                match model.predict(x)? {
                    TaskOutput::Prediction(p) => pred.push(p),
                    TaskOutput::Logits(_) => {
                        return Err(HoloError::Data("sequence targets given to a classifier".into()))
                    }
                }
                truth.push(y.clone());
            }
            regression_metrics(&pred, &truth)
        }
    }
}

pub fn evaluate_dataset(model: &HoloModel, ds: &Dataset) -> Result<Metrics> {
    evaluate(model, &ds.inputs, &ds.targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctensor::C64;

    #[test]
    fn perfect_predictions() {
        let m = classification_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.macro_f1, Some(1.0));
        assert_eq!(m.micro_f1, Some(1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        // Class 0: P = 1/2, R = 1, F1 = 2/3; class 1: F1 = 0.
        let m = classification_metrics(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.accuracy, Some(0.5));
        assert!((m.macro_f1.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.micro_f1.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn regression_exact_and_offset() {
        let y = ComplexMatrix::from_fn(2, 2, |r, c| C64::new(r as f64, c as f64));
        let m = regression_metrics(&[y.clone()], &[y.clone()]).unwrap();
        assert_eq!((m.mae, m.rmse), (Some(0.0), Some(0.0)));
        // Errors 3+4j everywhere: modulus 5.
        let shifted = y.map(|z| z + C64::new(3.0, 4.0));
        let m = regression_metrics(&[shifted], &[y]).unwrap();
        assert!((m.mae.unwrap() - 5.0).abs() < 1e-12);
        assert!((m.rmse.unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatch() {
        assert!(classification_metrics(&[0], &[0, 1], 2).is_err());
        assert!(classification_metrics(&[3], &[0], 2).is_err());
        assert!(regression_metrics(&[], &[]).is_err());
    }
}
