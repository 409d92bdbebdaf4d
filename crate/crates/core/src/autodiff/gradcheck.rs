use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::ctensor::{ComplexMatrix, C64};
use crate::error::Result;
use crate::model::{HoloModel, Target};

/// Central differences `(f(θ+h) − f(θ−h)) / 2h` for every real component
/// of every parameter, laid out like the store's gradient buffers. The
/// imaginary slot of real-only parameters is left at zero.
pub fn finite_diff<F>(mut f: F, store: &ParamStore, h: f64) -> Vec<ComplexMatrix>
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let p = store.get(id);
        let mut g = ComplexMatrix::zeros(p.value.rows(), p.value.cols());
        let parts = if p.real_only { 1 } else { 2 };
        for k in 0..p.value.len() {
            let mut z = C64::new(0.0, 0.0);
            for part in 0..parts {
                let idx = 2 * k + part;
                let x0 = store.component(id, idx);
                work.set_component(id, idx, x0 + h);
                let fp = f(&work);
                work.set_component(id, idx, x0 - h);
                let fm = f(&work);
                work.set_component(id, idx, x0);
                let d = (fp - fm) / (2.0 * h);
                if part == 0 {
                    z.re = d;
                } else {
                    z.im = d;
                }
            }
            g.data_mut()[k] = z;
        }
        out.push(g);
    }
    out
}

/// Richardson extrapolation of two central differences,
/// `(4·D(h/2) − D(h)) / 3`, which cancels the `h²` truncation term. This
/// keeps truncation error small at step sizes large enough that roundoff
/// in `f` stays negligible.
pub fn extrapolated_diff<F>(mut f: F, store: &ParamStore, h: f64) -> Vec<ComplexMatrix>
where
    F: FnMut(&ParamStore) -> f64,
{
    let coarse = finite_diff(&mut f, store, h);
    let fine = finite_diff(&mut f, store, h / 2.0);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| {
            let mut out = f.clone();
            for (o, c) in out.data_mut().iter_mut().zip(c.data()) {
                *o = (*o * 4.0 - c) / 3.0;
            }
            out
        })
        .collect()
}

/// Outcome of comparing analytic gradients with finite differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(parameter name, max relative error)` in store order.
    pub per_tensor: Vec<(String, f64)>,
    pub components: usize,
    pub tol: f64,
    pub pass: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradient buffers already in `store` with `numeric`.
pub fn compare_gradients(store: &ParamStore, numeric: &[ComplexMatrix], tol: f64) -> GradCheckReport {
    let mut per_tensor = Vec::with_capacity(store.len());
    let mut components = 0;
    let mut max_rel_err: f64 = 0.0;
    for (p, n) in store.iter().zip(numeric) {
        let mut worst: f64 = 0.0;
        for (a, b) in p.grad.data().iter().zip(n.data()) {
            worst = worst.max(relative_error(a.re, b.re));
            components += 1;
            if !p.real_only {
                worst = worst.max(relative_error(a.im, b.im));
                components += 1;
            }
        }
        max_rel_err = max_rel_err.max(worst);
        per_tensor.push((p.name.clone(), worst));
    }
    GradCheckReport {
        pass: max_rel_err <= tol,
        max_rel_err,
        per_tensor,
        components,
        tol,
    }
}

/// Settings for [`grad_check_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub tol: f64,
    pub h: f64,
    /// Use [`extrapolated_diff`] instead of a single central difference.
    pub extrapolate: bool,
    /// Multiplies the analytic gradient before comparison; anything other
    /// than 1 is a deliberate fault for negative controls.
    pub fault_scale: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            h: 1e-4,
            extrapolate: true,
            fault_scale: 1.0,
        }
    }
}

fn batch_loss(model: &HoloModel, batch: &[(ComplexMatrix, Target)]) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|(x, t)| model.evaluate_loss(x, t).map(|b| b.total).unwrap_or(f64::NAN))
        .sum::<f64>()
        / n
}

/// Analytic gradient of the mean batch loss (dropout off) placed in the
/// returned model's gradient buffers.
pub fn analytic_gradients(model: &HoloModel, batch: &[(ComplexMatrix, Target)]) -> Result<HoloModel> {
    let mut m = model.clone();
    m.store.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    for (x, t) in batch {
        m.accumulate_gradients(x, t, None, scale)?;
    }
    Ok(m)
}

/// Checks the model's analytic gradients on the mean loss of `batch`.
pub fn grad_check(model: &HoloModel, batch: &[(ComplexMatrix, Target)], tol: f64) -> Result<GradCheckReport> {
    grad_check_with(
        model,
        batch,
        &GradCheckOptions {
            tol,
            ..GradCheckOptions::default()
        },
    )
}

pub fn grad_check_with(
    model: &HoloModel,
    batch: &[(ComplexMatrix, Target)],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut analytic = analytic_gradients(model, batch)?;
    if opts.fault_scale != 1.0 {
        analytic.store.scale_grads(opts.fault_scale);
    }
    let mut probe = model.clone();
    let f = |s: &ParamStore| {
        probe.store.clone_from(s);
        batch_loss(&probe, batch)
    };
    let numeric = if opts.extrapolate {
        extrapolated_diff(f, &model.store, opts.h)
    } else {
        finite_diff(f, &model.store, opts.h)
    };
    Ok(compare_gradients(&analytic.store, &numeric, opts.tol))
}

/// Distance of the batch's forward passes from the non-differentiable
/// locus (see [`super::Tape::kink_distance`]).
pub fn kink_distance(model: &HoloModel, batch: &[(ComplexMatrix, Target)]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (x, t) in batch {
        let mut tape = super::Tape::new();
        let fwd = model.forward(&mut tape, x, None)?;
        model.losses(&mut tape, &fwd, x, t)?;
        best = best.min(tape.kink_distance());
    }
    Ok(best)
}

/// Seeds closer than this to a kink are skipped by [`gradcheck_suite`]:
/// finite differences straddling a kink measure a one-sided slope.
pub const MIN_KINK_DISTANCE: f64 = 1e-4;

/// One model/batch instance examined by [`gradcheck_suite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCase {
    /// `"classification"` or `"regression"`.
    pub head: String,
    pub seed: u64,
    pub kink_distance: f64,
    /// `None` when the instance was skipped for lying near a kink.
    pub report: Option<GradCheckReport>,
}

/// Small model (T=4, d_model=8, 2 heads, 1 layer) and a batch of two random
/// samples for the given head and seed.
pub fn gradcheck_instance(regression: bool, seed: u64) -> Result<(HoloModel, Vec<(ComplexMatrix, Target)>)> {
    use crate::model::{ModelConfig, TaskKind};
    use rand::{Rng, SeedableRng};

    let task = if regression {
        TaskKind::Regression { d_out: 2, horizon: 3 }
    } else {
        TaskKind::Classification { num_classes: 3 }
    };
    let cfg = ModelConfig {
        seq_len: 4,
        d_in: 3,
        d_model: 8,
        heads: 2,
        layers: 1,
        d_ff: 16,
        task,
        ..ModelConfig::default()
    };
    let model = HoloModel::new(cfg, seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(super::derive_seed(seed, 77));
    let c = |rng: &mut rand_chacha::ChaCha8Rng| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let batch = (0..2)
        .map(|i| {
            let x = ComplexMatrix::from_fn(4, 3, |_, _| c(&mut rng));
            let t = if regression {
                Target::Sequence(ComplexMatrix::from_fn(3, 2, |_, _| c(&mut rng)))
            } else {
                Target::Class(i % 3)
            };
            (x, t)
        })
        .collect();
    Ok((model, batch))
}

/// Gradient checks on both heads, walking seeds upward from `first_seed`
/// until `per_head` instances away from kinks have been checked (at most
/// `4·per_head` attempts per head).
pub fn gradcheck_suite(per_head: usize, tol: f64, first_seed: u64) -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::new();
    for regression in [false, true] {
        let mut checked = 0;
        for seed in first_seed..first_seed + 4 * per_head as u64 {
            if checked == per_head {
                break;
            }
            let (model, batch) = gradcheck_instance(regression, seed)?;
            let kd = kink_distance(&model, &batch)?;
            let report = if kd >= MIN_KINK_DISTANCE {
                checked += 1;
                Some(grad_check(&model, &batch, tol)?)
            } else {
                None
            };
            cases.push(GradCheckCase {
                head: if regression { "regression" } else { "classification" }.into(),
                seed,
                kink_distance: kd,
                report,
            });
        }
    }
    Ok(cases)
}
