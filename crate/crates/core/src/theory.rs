//! Executable checks of the analytical properties of holographic attention.
//!
//! Each `verify_*` function is deterministic given its seed and returns a
//! [`CheckReport`] with the measured worst case, the limit it was compared
//! against, and any secondary checks. Properties are identified `P1`–`P8`:
//!
//! * P1: with all phase offsets zero the layer is standard cosine attention,
//!   and the similarity Gram matrix is positive semidefinite.
//! * P2: a global phase rotation of Q, K, V leaves weights unchanged and
//!   rotates the output.
//! * P3: output norm is bounded by the weighted value norms, with equality
//!   for aligned values and cancellation for opposite ones.
//! * P4: scores strictly decrease with phase mismatch.
//! * P5: softmax of log-precision scores gives precision weights, so the
//!   output is the precision-weighted mean of the aligned values.
//! * P6: that mean concentrates at rate `1/√T`.
//! * P7: the output is Lipschitz in the phase offsets.
//! * P8: estimators that ignore phase cannot beat an error floor of `E[A²]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attention::{
    holographic_attention, output_from_phases, score, similarity, correlate, phase_offsets,
    standard_cosine_attention, superpose, AttentionConfig,
};
use crate::autodiff::derive_seed;
use crate::ctensor::{magnitude, phasor, row_softmax, vec_norm, wrap_angle, ComplexMatrix, RealMatrix, C64};
use crate::error::Result;

/// One measured quantity compared against a limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `true`: pass iff `value ≤ limit`; `false`: pass iff `value ≥ limit`.
    pub at_most: bool,
    pub pass: bool,
}

impl SubCheck {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            at_most: true,
            pass: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            at_most: false,
            pass: value >= limit,
        }
    }
}

/// Result of one property check. `max_violation`/`tolerance` describe the
/// headline measurement; `pass` additionally requires every entry of
/// `checks` to pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub property: String,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    /// Property-specific constant (Lipschitz constant, expected rate, ...).
    pub bound_used: f64,
    pub pass: bool,
    pub seed: u64,
    /// Set when the configuration is known to break this property.
    pub expected_fail: bool,
    pub checks: Vec<SubCheck>,
}

impl CheckReport {
    fn new(property: &str, trials: usize, seed: u64, bound_used: f64, checks: Vec<SubCheck>) -> Self {
        let head = &checks[0];
        Self {
            property: property.into(),
            trials,
            max_violation: head.value,
            tolerance: head.limit,
            bound_used,
            pass: checks.iter().all(|c| c.pass),
            seed,
            expected_fail: false,
            checks,
        }
    }

    /// Whether this report is consistent with expectations: passing
    /// properties pass, expected failures fail.
    pub fn as_expected(&self) -> bool {
        self.pass != self.expected_fail
    }

    /// One-line JSON record.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn rand_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| rand_c(rng))
}

fn max_row_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.sub(b).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
}

/// Holographic vs standard attention for positive real inputs, plus the
/// Gram PSD check. `injected_phase` replaces every phase offset by a
/// constant before aggregation, as a negative control.
pub fn verify_p1_with(trials: usize, tol: f64, seed: u64, injected_phase: Option<f64>) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = AttentionConfig::default();
    let mut worst: f64 = 0.0;
    let mut psd_worst: f64 = 0.0;
    for trial in 0..trials {
        let t = 1 + trial % 8;
        let dk = rng.random_range(1..=4);
        let pos = |rng: &mut ChaCha8Rng| ComplexMatrix::from_fn(t, dk, |_, _| C64::new(rng.random_range(0.05..1.0), 0.0));
        let q = pos(&mut rng);
        let k = pos(&mut rng);
        let v = pos(&mut rng);
        let std_out = standard_cosine_attention(&q, &k, &v, cfg.eps)?;
        let holo = match injected_phase {
            None => holographic_attention(&q, &k, &v, &cfg)?.output,
            Some(p) => {
                let s = correlate(&q, &k)?;
                let sim = similarity(&s, &q, &k, cfg.eps)?;
                let phases = RealMatrix::filled(t, t, p);
                output_from_phases(&sim, &phases, &v, &cfg)?
            }
        };
        worst = worst.max(max_row_diff(&holo, &std_out));

        // Gram PSD with Q = K (complex).
        let z = rand_matrix(t, dk, &mut rng);
        let s = correlate(&z, &z)?;
        let sim = similarity(&s, &z, &z, cfg.eps)?;
        for _ in 0..4 {
            let c: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut quad = 0.0;
            for i in 0..t {
                for j in 0..t {
                    quad += c[i] * c[j] * sim.get(i, j);
                }
            }
            psd_worst = psd_worst.max(-quad);
        }
    }
    Ok(CheckReport::new(
        "P1",
        trials,
        seed,
        0.0,
        vec![
            SubCheck::at_most("max |H_holo - H_std|", worst, tol),
            SubCheck::at_most("max negative Gram quadratic form", psd_worst, tol),
        ],
    ))
}

pub fn verify_p1(trials: usize, tol: f64) -> Result<CheckReport> {
    verify_p1_with(trials, tol, 0x5031, None)
}

/// Rotation invariance of weights and equivariance of outputs. `theta`
/// fixes the rotation instead of drawing it.
pub fn verify_p2_with(
    trials: usize,
    tol: f64,
    seed: u64,
    cfg: &AttentionConfig,
    theta: Option<f64>,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w_worst: f64 = 0.0;
    let mut h_worst: f64 = 0.0;
    for trial in 0..trials {
        let t = 1 + trial % 8;
        let dk = rng.random_range(1..=4);
        let q = rand_matrix(t, dk, &mut rng);
        let k = rand_matrix(t, dk, &mut rng);
        let v = rand_matrix(t, dk, &mut rng);
        let th = theta.unwrap_or_else(|| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let a = holographic_attention(&q, &k, &v, cfg)?;
        let b = holographic_attention(&q.rotate(th), &k.rotate(th), &v.rotate(th), cfg)?;
        for (x, y) in a.weights.data().iter().zip(b.weights.data()) {
            w_worst = w_worst.max((x - y).abs());
        }
        let scale = a.output.max_abs().max(1.0);
        h_worst = h_worst.max(max_row_diff(&b.output, &a.output.rotate(th)) / scale);
    }
    Ok(CheckReport::new(
        "P2",
        trials,
        seed,
        0.0,
        vec![
            SubCheck::at_most("max |alpha - alpha'|", w_worst, tol),
            SubCheck::at_most("max |H' - e^{j theta} H| / max(1, |H|)", h_worst, tol),
        ],
    ))
}

pub fn verify_p2(trials: usize, tol: f64) -> Result<CheckReport> {
    verify_p2_with(trials, tol, 0x5032, &AttentionConfig::default(), None)
}

/// Norm bounds on random instances, constructive equality, and
/// destructive cancellation.
pub fn verify_p3_with(trials: usize, seed: u64, cfg: &AttentionConfig) -> Result<CheckReport> {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound_excess: f64 = f64::NEG_INFINITY;
    let mut equality_slack: f64 = 0.0;
    let mut cancel: f64 = 0.0;
    for trial in 0..trials {
        let t = 1 + trial % 8;
        let dk = rng.random_range(1..=4);
        let q = rand_matrix(t, dk, &mut rng);
        let k = rand_matrix(t, dk, &mut rng);
        let v = rand_matrix(t, dk, &mut rng);
        let tr = holographic_attention(&q, &k, &v, cfg)?;
        let vmax = (0..t).map(|j| vec_norm(v.row(j))).fold(0.0, f64::max);
        for i in 0..t {
            let h = vec_norm(tr.output.row(i));
            let weighted: f64 = (0..t).map(|j| tr.weights.get(i, j) * vec_norm(v.row(j))).sum();
            bound_excess = bound_excess.max(h - weighted).max(weighted - vmax);
        }

        // Constructive: one query, values pre-rotated so every aligned
        // value points along the same unit vector.
        let q1 = rand_matrix(1, dk, &mut rng);
        let u = {
            let r = rand_matrix(1, dk, &mut rng);
            let n = vec_norm(r.row(0));
            r.scale(C64::new(1.0 / n, 0.0))
        };
        let s = correlate(&q1, &k)?;
        let dphi = phase_offsets(&s);
        let radii: Vec<f64> = (0..t).map(|_| rng.random_range(0.1..2.0)).collect();
        let v_aligned = ComplexMatrix::from_fn(t, dk, |j, c| u.get(0, c) * phasor(-dphi.get(0, j)) * radii[j]);
        let tr = holographic_attention(&q1, &k, &v_aligned, cfg)?;
        let h = vec_norm(tr.output.row(0));
        let weighted: f64 = (0..t).map(|j| tr.weights.get(0, j) * radii[j]).sum();
        equality_slack = equality_slack.max((weighted - h).abs());

        // Destructive: two identical keys with opposite values.
        let k2 = ComplexMatrix::from_fn(2, dk, |_, c| k.get(0, c));
        let v0 = rand_matrix(1, dk, &mut rng);
        let v2 = ComplexMatrix::from_fn(2, dk, |j, c| if j == 0 { v0.get(0, c) } else { -v0.get(0, c) });
        let tr = holographic_attention(&q1, &k2, &v2, cfg)?;
        cancel = cancel.max(vec_norm(tr.output.row(0)));
    }
    Ok(CheckReport::new(
        "P3",
        trials,
        seed,
        0.0,
        vec![
            SubCheck::at_most("max bound excess", bound_excess.max(0.0), TOL),
            SubCheck::at_most("constructive equality slack", equality_slack, TOL),
            SubCheck::at_most("destructive residual norm", cancel, TOL),
        ],
    ))
}

pub fn verify_p3(trials: usize) -> Result<CheckReport> {
    verify_p3_with(trials, 0x5033, &AttentionConfig::default())
}

/// Strict decrease of the score along a phase grid on `[0, π]`.
pub fn verify_p4_with(grid_size: usize, cfg: &AttentionConfig) -> Result<CheckReport> {
    let d_k = 4;
    let n = grid_size.max(2);
    let grid: Vec<f64> = (0..n).map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64).collect();
    let count_inversions = |sim: f64, c: &AttentionConfig| -> Result<usize> {
        let sims = RealMatrix::filled(1, n, sim);
        let phases = RealMatrix::new(1, n, grid.clone())?;
        let w = score(&sims, &phases, d_k, c)?;
        Ok(w.data().windows(2).filter(|p| p[1] >= p[0]).count())
    };
    let mut inversions = 0;
    let mut cases = 0;
    for sim in [0.1, 0.5, 1.0] {
        for alpha in [0.5, 1.0, 2.0] {
            let c = AttentionConfig { alpha, ..cfg.clone() };
            inversions += count_inversions(sim, &c)?;
            cases += 1;
        }
    }
    let mut additive_inversions = 0;
    for sim in [-1.0, -0.5, -0.1, 0.5] {
        for gamma in [0.5, 1.0, 2.0] {
            let c = AttentionConfig {
                additive_gamma: Some(gamma),
                ..cfg.clone()
            };
            additive_inversions += count_inversions(sim, &c)?;
            cases += 1;
        }
    }
    Ok(CheckReport::new(
        "P4",
        cases,
        0,
        n as f64,
        vec![
            SubCheck::at_most("inversions (multiplicative decay)", inversions as f64, 0.0),
            SubCheck::at_most("inversions (additive penalty)", additive_inversions as f64, 0.0),
        ],
    ))
}

pub fn verify_p4(grid_size: usize) -> Result<CheckReport> {
    verify_p4_with(grid_size, &AttentionConfig::default())
}

/// Aggregates aligned values `U_j` for one query with scores `log w_j + c`
/// through the attention's superposition: values are stored pre-rotated by
/// `−Δφ_j` so the coherent sum sees exactly `U_j`.
fn precision_aggregate(u: &[Vec<C64>], log_w: &[f64], shift: f64, rng: &mut ChaCha8Rng, cfg: &AttentionConfig) -> Result<Vec<C64>> {
    let t = u.len();
    let d = u[0].len();
    let scores = RealMatrix::new(1, t, log_w.iter().map(|l| l + shift).collect())?;
    let weights = row_softmax(&scores);
    let dphi = RealMatrix::from_fn(1, t, |_, _| rng.random_range(-3.0..3.0));
    let v = ComplexMatrix::from_fn(t, d, |j, c| u[j][c] * phasor(-dphi.get(0, j)));
    let h = superpose(&weights, &dphi, &v, !cfg.ablate_coherent_sum)?;
    Ok(h.row(0).to_vec())
}

fn weighted_mean(u: &[Vec<C64>], w: &[f64]) -> Vec<C64> {
    let total: f64 = w.iter().sum();
    let d = u[0].len();
    (0..d)
        .map(|c| u.iter().zip(w).map(|(row, wj)| row[c] * *wj).sum::<C64>() / total)
        .collect()
}

fn draw_noisy(mu: &[C64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let s = sigma / std::f64::consts::SQRT_2;
    mu.iter()
        .map(|m| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            m + C64::new(re * s, im * s)
        })
        .collect()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max(magnitude(x - y)))
}

/// Precision weighting (P5) and concentration (P6). Returns both reports.
pub fn verify_p5_p6_with(trials: usize, tol: f64, seed: u64, cfg: &AttentionConfig) -> Result<(CheckReport, CheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;

    // Algebraic identity softmax(log w + c) = w / Σw.
    let mut algebraic: f64 = 0.0;
    for trial in 0..trials {
        let t = 1 + trial % 16;
        let w: Vec<f64> = (0..t).map(|_| rng.random_range(0.01..10.0)).collect();
        let c = rng.random_range(-20.0..20.0);
        let scores = RealMatrix::new(1, t, w.iter().map(|x| x.ln() + c).collect())?;
        let sm = row_softmax(&scores);
        let total: f64 = w.iter().sum();
        for (j, x) in w.iter().enumerate() {
            algebraic = algebraic.max((sm.get(0, j) - x / total).abs());
        }
    }

    // Generative identity: the output is the precision-weighted mean.
    let mut identity: f64 = 0.0;
    for trial in 0..trials {
        let t = 1 + trial % 16;
        let mu: Vec<C64> = (0..d).map(|_| rand_c(&mut rng)).collect();
        let sig: Vec<f64> = (0..t).map(|_| rng.random_range(0.1..2.0)).collect();
        let u: Vec<Vec<C64>> = sig.iter().map(|s| draw_noisy(&mu, *s, &mut rng)).collect();
        let prec: Vec<f64> = sig.iter().map(|s| 1.0 / (s * s)).collect();
        let log_w: Vec<f64> = prec.iter().map(|p| p.ln()).collect();
        let shift = rng.random_range(-5.0..5.0);
        let h = precision_aggregate(&u, &log_w, shift, &mut rng, cfg)?;
        identity = identity.max(max_diff(&h, &weighted_mean(&u, &prec)));
    }

    // Equal precisions give the plain mean.
    let mut equal: f64 = 0.0;
    // A dominant precision (1e9 against 1) selects its value.
    let mut dominance: f64 = 0.0;
    for _ in 0..20 {
        let t = 6;
        let mu: Vec<C64> = (0..d).map(|_| rand_c(&mut rng)).collect();
        let u: Vec<Vec<C64>> = (0..t).map(|_| draw_noisy(&mu, 1.0, &mut rng)).collect();
        let h = precision_aggregate(&u, &vec![0.0; t], 0.0, &mut rng, cfg)?;
        equal = equal.max(max_diff(&h, &weighted_mean(&u, &vec![1.0; t])));
        let star = rng.random_range(0..t);
        let log_w: Vec<f64> = (0..t).map(|j| if j == star { 1e9f64.ln() } else { 0.0 }).collect();
        let h = precision_aggregate(&u, &log_w, 0.0, &mut rng, cfg)?;
        dominance = dominance.max(max_diff(&h, &u[star]));
    }

    let p5 = CheckReport::new(
        "P5",
        trials,
        seed,
        0.0,
        vec![
            SubCheck::at_most("precision-weighted mean identity", identity, tol),
            SubCheck::at_most("softmax of log-weights identity", algebraic, tol),
            SubCheck::at_most("equal precisions give plain mean", equal, tol),
            SubCheck::at_most("dominant precision selects value", dominance, 1e-6),
        ],
    );

    // Concentration: mean error at T=16 vs T=1024 should shrink by √64 = 8.
    let rate_trials = trials.max(50);
    let mean_err = |t: usize, rng: &mut ChaCha8Rng| -> Result<f64> {
        let mut acc = 0.0;
        for _ in 0..rate_trials {
            let mu: Vec<C64> = (0..d).map(|_| rand_c(rng)).collect();
            let sig: Vec<f64> = (0..t).map(|_| rng.random_range(0.5..1.5)).collect();
            let u: Vec<Vec<C64>> = sig.iter().map(|s| draw_noisy(&mu, *s, rng)).collect();
            let log_w: Vec<f64> = sig.iter().map(|s| -2.0 * s.ln()).collect();
            let h = precision_aggregate(&u, &log_w, 0.0, rng, cfg)?;
            let err: f64 = h.iter().zip(&mu).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            acc += err;
        }
        Ok(acc / rate_trials as f64)
    };
    let e_small = mean_err(16, &mut rng)?;
    let e_large = mean_err(1024, &mut rng)?;
    let expected = (1024.0f64 / 16.0).sqrt();
    let ratio = e_small / e_large;
    let factor = (ratio / expected).max(expected / ratio);
    let p6 = CheckReport::new(
        "P6",
        rate_trials,
        seed,
        expected,
        vec![SubCheck::at_most("rate deviation factor", factor, 3.0)],
    );
    Ok((p5, p6))
}

pub fn verify_p5_p6(trials: usize, tol: f64) -> Result<(CheckReport, CheckReport)> {
    verify_p5_p6_with(trials, tol, 0x5035, &AttentionConfig::default())
}

/// `L = B·(1 + α·S/√d_k · T/4)`.
pub fn lipschitz_constant(b: f64, s: f64, alpha: f64, d_k: usize, t: usize) -> f64 {
    b * (1.0 + alpha * s / (d_k as f64).sqrt() * t as f64 / 4.0)
}

/// Phase-perturbation sensitivity against the Lipschitz bound. The extra
/// sub-check reports the largest observed `‖ΔH_i‖ / (L·δ)` for reference.
pub fn verify_p7_with(trials: usize, seed: u64, cfg: &AttentionConfig) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut excess: f64 = f64::NEG_INFINITY;
    let mut tightest: f64 = 0.0;
    let deltas = [0.01, 0.05, 0.2];
    for trial in 0..trials {
        let t = 1 + trial % 8;
        let dk = rng.random_range(1..=4);
        let q = rand_matrix(t, dk, &mut rng);
        let k = rand_matrix(t, dk, &mut rng);
        let v = rand_matrix(t, dk, &mut rng);
        let tr = holographic_attention(&q, &k, &v, cfg)?;
        let b = (0..t).map(|j| vec_norm(v.row(j))).fold(0.0, f64::max);
        let s = tr.sim.max_abs();
        let l = lipschitz_constant(b, s, cfg.alpha, dk, t);
        let base = output_from_phases(&tr.sim, &tr.delta_phi, &v, cfg)?;
        let delta = deltas[trial % deltas.len()];
        // Perturbation with max-norm exactly δ.
        let mut eta: Vec<f64> = (0..t * t).map(|_| rng.random_range(-delta..=delta)).collect();
        let pick = rng.random_range(0..t * t);
        eta[pick] = if rng.random::<bool>() { delta } else { -delta };
        let moved = RealMatrix::from_fn(t, t, |i, j| wrap_angle(tr.delta_phi.get(i, j) + eta[i * t + j]));
        let out = output_from_phases(&tr.sim, &moved, &v, cfg)?;
        for i in 0..t {
            let dh = vec_norm(out.sub(&base)?.row(i));
            excess = excess.max(dh - l * delta);
            if l > 0.0 {
                tightest = tightest.max(dh / (l * delta));
            }
        }
    }
    Ok(CheckReport::new(
        "P7",
        trials,
        seed,
        tightest,
        vec![
            SubCheck::at_most("max (|dH_i| - L delta)", excess, 1e-9),
            SubCheck::at_most("tightest ratio |dH_i| / (L delta)", tightest, 1.0 + 1e-9),
        ],
    ))
}

pub fn verify_p7(trials: usize) -> Result<CheckReport> {
    verify_p7_with(trials, 0x5037, &AttentionConfig::default())
}

/// Rayleigh(1) amplitude: `E[A²] = 2`.
fn rayleigh(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Least-squares complex coefficients of `X` on features of `A` (fit on the
/// first half, evaluated on the second) and the best binned conditional
/// mean; returns the lower of the two held-out MSEs.
fn best_amplitude_only_mse(a: &[f64], x: &[C64]) -> f64 {
    let n = a.len();
    let half = n / 2;
    // Polynomial features 1, A, A²: normal equations solved per real part.
    let feats = |v: f64| [1.0, v, v * v];
    let mut gram = [[0.0f64; 3]; 3];
    let mut rhs = [C64::new(0.0, 0.0); 3];
    for i in 0..half {
        let f = feats(a[i]);
        for r in 0..3 {
            for c in 0..3 {
                gram[r][c] += f[r] * f[c];
            }
            rhs[r] += x[i] * f[r];
        }
    }
    let coef = solve3(gram, rhs);
    let mut mse_poly = 0.0;
    for i in half..n {
        let f = feats(a[i]);
        let pred: C64 = (0..3).map(|r| coef[r] * f[r]).sum();
        mse_poly += (x[i] - pred).norm_sqr();
    }
    mse_poly /= (n - half) as f64;

    // Conditional mean over 50 equal-count bins of A.
    let bins = 50;
    let mut sorted: Vec<f64> = a[..half].to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|b| sorted[b * half / bins]).collect();
    let bin_of = |v: f64| edges.partition_point(|e| *e <= v);
    let mut sums = vec![C64::new(0.0, 0.0); bins];
    let mut counts = vec![0usize; bins];
    for i in 0..half {
        let b = bin_of(a[i]);
        sums[b] += x[i];
        counts[b] += 1;
    }
    let means: Vec<C64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0 { s / *c as f64 } else { C64::new(0.0, 0.0) })
        .collect();
    let mut mse_bin = 0.0;
    for i in half..n {
        mse_bin += (x[i] - means[bin_of(a[i])]).norm_sqr();
    }
    mse_bin /= (n - half) as f64;
    mse_poly.min(mse_bin)
}

/// Gaussian elimination with partial pivoting for a 3×3 real system with
/// complex right-hand side.
fn solve3(mut m: [[f64; 3]; 3], mut b: [C64; 3]) -> [C64; 3] {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).expect("rows");
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= f * m[col][c];
            }
            let bc = b[col];
            b[row] -= bc * f;
        }
    }
    let mut x = [C64::new(0.0, 0.0); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for c in row + 1..3 {
            acc -= x[c] * m[row][c];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Error floor of phase-blind estimation with Rayleigh amplitudes and
/// uniform phases. `unit_amplitude` fixes `A = 1` instead.
pub fn verify_p8_with(n_samples: usize, seed: u64, unit_amplitude: bool) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n_samples);
    let mut x = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let amp = if unit_amplitude { 1.0 } else { rayleigh(&mut rng) };
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        a.push(amp);
        x.push(phasor(phi) * amp);
    }
    let ea2 = if unit_amplitude { 1.0 } else { 2.0 };
    let zero_mse = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / n_samples as f64;
    let amp_mse = best_amplitude_only_mse(&a, &x);
    // Phase-aware linear estimator a·X with least-squares a.
    let num: C64 = x.iter().map(|z| z * z.conj()).sum();
    let den: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    let coef = num / den;
    let lin_mse = x.iter().map(|z| (z - coef * z).norm_sqr()).sum::<f64>() / n_samples as f64;
    Ok(CheckReport::new(
        "P8",
        n_samples,
        seed,
        ea2,
        vec![
            SubCheck::at_most("|zero-estimator MSE / E[A^2] - 1|", (zero_mse / ea2 - 1.0).abs(), 0.02),
            SubCheck::at_least("best amplitude-only MSE / E[A^2]", amp_mse / ea2, 0.98),
            SubCheck::at_most("phase-aware linear MSE / E[A^2]", lin_mse / ea2, 0.02),
        ],
    ))
}

pub fn verify_p8(n_samples: usize) -> Result<CheckReport> {
    verify_p8_with(n_samples, 0x5038, false)
}

/// Trial counts, seed and attention variant for [`run_all`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub p1_trials: usize,
    pub p2_trials: usize,
    pub p3_trials: usize,
    pub p4_grid: usize,
    pub p5_trials: usize,
    pub p7_trials: usize,
    pub p8_samples: usize,
    pub attention: AttentionConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            p1_trials: 200,
            p2_trials: 500,
            p3_trials: 1000,
            p4_grid: 1000,
            p5_trials: 500,
            p7_trials: 1000,
            p8_samples: 100_000,
            attention: AttentionConfig::default(),
        }
    }
}

/// Properties that the given attention variant is known to violate.
pub fn expected_failures(cfg: &AttentionConfig) -> Vec<&'static str> {
    let mut out = Vec::new();
    if cfg.ablate_coherent_sum {
        out.extend(["P3", "P5", "P6"]);
    }
    if cfg.ablate_phase_decay && cfg.additive_gamma.is_none() {
        out.push("P4");
    }
    out.sort_unstable();
    out
}

/// Runs every check, marking expected failures of ablated variants.
pub fn run_all(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let att = &cfg.attention;
    let s = |i: u64| derive_seed(cfg.seed, i);
    let (p5, p6) = verify_p5_p6_with(cfg.p5_trials, 1e-12, s(5), att)?;
    let mut reports = vec![
        verify_p1_with(cfg.p1_trials, 1e-12, s(1), None)?,
        verify_p2_with(cfg.p2_trials, 1e-10, s(2), att, None)?,
        verify_p3_with(cfg.p3_trials, s(3), att)?,
        verify_p4_with(cfg.p4_grid, att)?,
        p5,
        p6,
        verify_p7_with(cfg.p7_trials, s(7), att)?,
        verify_p8_with(cfg.p8_samples, s(8), false)?,
    ];
    let expected = expected_failures(att);
    for r in &mut reports {
        r.expected_fail = expected.contains(&r.property.as_str());
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_passes_and_detects_injected_phase() {
        let r = verify_p1(200, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
        let bad = verify_p1_with(50, 1e-12, 1, Some(0.1)).unwrap();
        assert!(!bad.pass && bad.max_violation > 0.0);
    }

    #[test]
    fn p1_single_token_is_exact() {
        let r = verify_p1_with(1, 0.0, 3, None).unwrap();
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn p2_zero_and_half_turn() {
        let cfg = AttentionConfig::default();
        let r0 = verify_p2_with(100, 0.0, 2, &cfg, Some(0.0)).unwrap();
        assert!(r0.pass, "{r0:?}");
        let rpi = verify_p2_with(100, 1e-10, 2, &cfg, Some(std::f64::consts::PI)).unwrap();
        assert!(rpi.pass, "{rpi:?}");
        assert!(verify_p2(500, 1e-10).unwrap().pass);
    }

    #[test]
    fn p3_and_coherent_sum_control() {
        assert!(verify_p3(1000).unwrap().pass);
        let ablated = AttentionConfig {
            ablate_coherent_sum: true,
            ..AttentionConfig::default()
        };
        assert!(!verify_p3_with(200, 1, &ablated).unwrap().pass);
    }

    #[test]
    fn p4_grid_and_decay_control() {
        let r = verify_p4(1000).unwrap();
        assert!(r.pass, "{r:?}");
        let zero_alpha = AttentionConfig {
            alpha: 0.0,
            ..AttentionConfig::default()
        };
        let sims = RealMatrix::filled(1, 3, 0.7);
        let phases = RealMatrix::new(1, 3, vec![0.0, 1.0, 3.0]).unwrap();
        let w = score(&sims, &phases, 4, &zero_alpha).unwrap();
        assert!(w.data().iter().all(|x| (*x - w.get(0, 0)).abs() < 1e-15));
        let ablated = AttentionConfig {
            ablate_phase_decay: true,
            ..AttentionConfig::default()
        };
        assert!(!verify_p4_with(100, &ablated).unwrap().pass);
    }

    #[test]
    fn p5_p6_pass() {
        let (p5, p6) = verify_p5_p6(300, 1e-12).unwrap();
        assert!(p5.pass, "{p5:?}");
        assert!(p6.pass, "{p6:?}");
    }

    #[test]
    fn lipschitz_example_value() {
        assert!((lipschitz_constant(1.0, 1.0, 1.0, 4, 8) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn p7_passes() {
        let r = verify_p7(1000).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn p8_floor_and_unit_circle() {
        let r = verify_p8(100_000).unwrap();
        assert!(r.pass, "{r:?}");
        let unit = verify_p8_with(20_000, 3, true).unwrap();
        assert!(unit.checks[0].value < 1e-12);
    }

    #[test]
    fn expected_failure_sets() {
        let mut c = AttentionConfig::default();
        assert!(expected_failures(&c).is_empty());
        c.ablate_coherent_sum = true;
        assert_eq!(expected_failures(&c), vec!["P3", "P5", "P6"]);
        c.ablate_phase_decay = true;
        assert_eq!(expected_failures(&c), vec!["P3", "P4", "P5", "P6"]);
    }

    #[test]
    fn suite_marks_ablation_controls() {
        let cfg = SuiteConfig {
            p1_trials: 20,
            p2_trials: 20,
            p3_trials: 50,
            p4_grid: 100,
            p5_trials: 30,
            p7_trials: 50,
            p8_samples: 20_000,
            attention: AttentionConfig {
                ablate_coherent_sum: true,
                ..AttentionConfig::default()
            },
            seed: 4,
        };
        let reports = run_all(&cfg).unwrap();
        assert_eq!(reports.len(), 8);
        for r in &reports {
            assert!(r.as_expected(), "{r:?}");
        }
    }
}
