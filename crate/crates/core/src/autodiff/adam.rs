use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Adam hyperparameters. `weight_decay` is added to the gradient (L2
/// coupling, as in classic Adam).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// One bias-corrected Adam update on every real component, using the
/// gradients currently in the store. `lr` overrides `cfg.lr` so schedules
/// can drive it.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig, lr: f64) {
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in store.iter_mut() {
        let real_only = p.real_only;
        for (k, (z, g)) in p.value.data_mut().iter_mut().zip(p.grad.data()).enumerate() {
            let parts = if real_only { 1 } else { 2 };
            for part in 0..parts {
                let idx = 2 * k + part;
                let (x, gx) = if part == 0 { (&mut z.re, g.re) } else { (&mut z.im, g.im) };
                let grad = gx + cfg.weight_decay * *x;
                let m = &mut p.m[idx];
                let v = &mut p.v[idx];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * grad;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * grad * grad;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctensor::{ComplexMatrix, C64};

    fn store_with(values: Vec<C64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = values.len();
        s.insert("w", ComplexMatrix::new(1, n, values).unwrap(), false).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store_with(vec![C64::new(0.5, -1.5), C64::new(2.0, 0.1)]);
        let before = s.value(s.id("w").unwrap()).clone();
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        for _ in 0..10 {
            adam_step(&mut s, &cfg, 1e-2);
        }
        assert_eq!(s.value(s.id("w").unwrap()), &before);
        assert_eq!(s.step(), 10);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        // With a constant gradient g, m̂ = g and v̂ = g² exactly, so every
        // step moves each component by lr·|g|/(|g| + eps) ≈ lr.
        let mut s = store_with(vec![C64::new(0.0, 0.0)]);
        let id = s.id("w").unwrap();
        s.get_mut(id).grad = ComplexMatrix::new(1, 1, vec![C64::new(3.0, -0.02)]).unwrap();
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let lr = 1e-3;
        let mut prev = s.value(id).get(0, 0);
        for _ in 0..200 {
            adam_step(&mut s, &cfg, lr);
            let now = s.value(id).get(0, 0);
            assert!(((prev.re - now.re) - lr).abs() < 1e-9);
            assert!(((now.im - prev.im) - lr).abs() < 1e-9);
            prev = now;
        }
    }

    #[test]
    fn identical_stores_update_identically() {
        let mut a = store_with(vec![C64::new(0.3, 0.2), C64::new(-1.0, 4.0)]);
        let id = a.id("w").unwrap();
        a.get_mut(id).grad = ComplexMatrix::new(1, 2, vec![C64::new(0.7, -0.1), C64::new(1e-3, 5.0)]).unwrap();
        let mut b = a.clone();
        let cfg = AdamConfig::default();
        for _ in 0..5 {
            adam_step(&mut a, &cfg, 1e-2);
            adam_step(&mut b, &cfg, 1e-2);
        }
        let bits = |s: &ParamStore| -> Vec<u64> {
            s.value(id).data().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn real_only_parameters_stay_real() {
        let mut s = ParamStore::new();
        let id = s.insert("r", ComplexMatrix::new(1, 1, vec![C64::new(1.0, 5.0)]).unwrap(), true).unwrap();
        assert_eq!(s.value(id).get(0, 0).im, 0.0);
        s.get_mut(id).grad = ComplexMatrix::new(1, 1, vec![C64::new(1.0, 0.0)]).unwrap();
        adam_step(&mut s, &AdamConfig::default(), 0.1);
        assert_eq!(s.value(id).get(0, 0).im, 0.0);
        assert!(s.value(id).get(0, 0).re < 1.0);
    }
}
