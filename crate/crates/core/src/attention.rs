//! Holographic self-attention.
//!
//! For a query row `Q_i` and key row `K_j` the complex correlation
//! `s_ij = <Q_i, K_j>` supplies both a real cosine similarity and a phase
//! offset `Δφ_ij = ∠s_ij`. Scores are damped by `exp(−α|Δφ_ij|)`, softmaxed
//! per query row, and each value row is rotated by `exp(jΔφ_ij)` before the
//! weighted sum, so in-phase contributions reinforce and anti-phase ones
//! cancel.
//!
//! ```text
//! sim_ij = Re(s_ij) / (‖Q_i‖‖K_j‖ + ε)
//! W_ij   = sim_ij / √d_k · exp(−α|Δφ_ij|)
//! H_i    = Σ_j softmax_j(W_i·) · V_j · exp(jΔφ_ij)
//! ```

use serde::{Deserialize, Serialize};

use crate::ctensor::{
    angle, cdot_unchecked, phasor, row_softmax, softmax_in_place, ComplexMatrix, RealMatrix, C64,
};
use crate::error::{dim_err, HoloError, Result};

/// Hyperparameters of one attention block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub heads: usize,
    /// Phase-decay coefficient.
    pub alpha: f64,
    /// Guard added to the norm product in the similarity denominator.
    pub eps: f64,
    pub ablate_phase_decay: bool,
    pub ablate_coherent_sum: bool,
    /// When set, scores use the additive gate `sim/√d_k − γ|Δφ|` instead of
    /// the multiplicative decay.
    pub additive_gamma: Option<f64>,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            heads: 1,
            alpha: 1.0,
            eps: 1e-8,
            ablate_phase_decay: false,
            ablate_coherent_sum: false,
            additive_gamma: None,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 {
            return Err(HoloError::Config("heads must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(HoloError::Config(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.eps > 0.0) {
            return Err(HoloError::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if let Some(g) = self.additive_gamma {
            if !(g >= 0.0) {
                return Err(HoloError::Config(format!(
                    "additive gamma must be non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }

    /// Per-head width for a model of width `d_model`.
    pub fn head_dim(&self, d_model: usize) -> Result<usize> {
        self.validate()?;
        if d_model % self.heads != 0 || d_model == 0 {
            return Err(HoloError::Config(format!(
                "d_model {} not divisible by {} heads",
                d_model, self.heads
            )));
        }
        Ok(d_model / self.heads)
    }
}

/// Everything computed by one attention call, kept for inspection and for
/// the backward pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionTrace {
    /// Complex correlations `s_ij`.
    pub s: ComplexMatrix,
    /// `∠s_ij` in `(−π, π]`.
    pub delta_phi: RealMatrix,
    pub sim: RealMatrix,
    /// Pre-softmax scores.
    pub w: RealMatrix,
    /// Softmax weights (before any dropout).
    pub weights: RealMatrix,
    pub output: ComplexMatrix,
}

/// Correlation matrix `s_ij = Σ_c Q_ic conj(K_jc)`.
pub fn correlate(q: &ComplexMatrix, k: &ComplexMatrix) -> Result<ComplexMatrix> {
    if q.cols() != k.cols() {
        return Err(dim_err(
            "correlate",
            format!("query width {} vs key width {}", q.cols(), k.cols()),
        ));
    }
    Ok(ComplexMatrix::from_fn(q.rows(), k.rows(), |i, j| {
        cdot_unchecked(q.row(i), k.row(j))
    }))
}

/// Real cosine similarity `Re(s_ij) / (‖Q_i‖‖K_j‖ + eps)`.
pub fn similarity(s: &ComplexMatrix, q: &ComplexMatrix, k: &ComplexMatrix, eps: f64) -> Result<RealMatrix> {
    if s.rows() != q.rows() || s.cols() != k.rows() {
        return Err(dim_err(
            "similarity",
            format!(
                "correlations {:?} for {} queries and {} keys",
                s.shape(),
                q.rows(),
                k.rows()
            ),
        ));
    }
    let qn: Vec<f64> = (0..q.rows()).map(|i| q.row_norm(i)).collect();
    let kn: Vec<f64> = (0..k.rows()).map(|j| k.row_norm(j)).collect();
    Ok(RealMatrix::from_fn(s.rows(), s.cols(), |i, j| {
        s.get(i, j).re / (qn[i] * kn[j] + eps)
    }))
}

/// Entrywise phase of the correlations.
pub fn phase_offsets(s: &ComplexMatrix) -> RealMatrix {
    RealMatrix::from_fn(s.rows(), s.cols(), |i, j| angle(s.get(i, j)))
}

#[inline]
fn score_entry(sim: f64, dphi: f64, inv_sqrt_dk: f64, cfg: &AttentionConfig) -> f64 {
    if cfg.ablate_phase_decay {
        return sim * inv_sqrt_dk;
    }
    match cfg.additive_gamma {
        Some(gamma) => sim * inv_sqrt_dk - gamma * dphi.abs(),
        None => sim * inv_sqrt_dk * (-cfg.alpha * dphi.abs()).exp(),
    }
}

/// Phase-damped scores `W_ij = sim_ij/√d_k · exp(−α|Δφ_ij|)`.
pub fn score(sim: &RealMatrix, delta_phi: &RealMatrix, d_k: usize, cfg: &AttentionConfig) -> Result<RealMatrix> {
    if sim.shape() != delta_phi.shape() {
        return Err(dim_err(
            "score",
            format!("sim {:?} vs phases {:?}", sim.shape(), delta_phi.shape()),
        ));
    }
    if d_k == 0 {
        return Err(dim_err("score", "d_k must be positive"));
    }
    let inv = 1.0 / (d_k as f64).sqrt();
    Ok(RealMatrix::from_fn(sim.rows(), sim.cols(), |i, j| {
        score_entry(sim.get(i, j), delta_phi.get(i, j), inv, cfg)
    }))
}

/// `H_i = Σ_j weights_ij · V_j · exp(jΔφ_ij)`.
pub fn coherent_superpose(weights: &RealMatrix, delta_phi: &RealMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix> {
    superpose(weights, delta_phi, v, true)
}

/// Weighted value sum; `coherent = false` drops the phase rotation.
pub fn superpose(
    weights: &RealMatrix,
    delta_phi: &RealMatrix,
    v: &ComplexMatrix,
    coherent: bool,
) -> Result<ComplexMatrix> {
    if weights.shape() != delta_phi.shape() || weights.cols() != v.rows() {
        return Err(dim_err(
            "superpose",
            format!(
                "weights {:?}, phases {:?}, values {:?}",
                weights.shape(),
                delta_phi.shape(),
                v.shape()
            ),
        ));
    }
    let d = v.cols();
    let mut out = ComplexMatrix::zeros(weights.rows(), d);
    for i in 0..weights.rows() {
        let h = out.row_mut(i);
        for j in 0..weights.cols() {
            let a = weights.get(i, j);
            if a == 0.0 {
                continue;
            }
            let u = if coherent {
                phasor(delta_phi.get(i, j)) * a
            } else {
                C64::new(a, 0.0)
            };
            for (hc, vc) in h.iter_mut().zip(v.row(j)) {
                *hc += u * vc;
            }
        }
    }
    debug_assert_eq!(out.cols(), d);
    Ok(out)
}

fn check_qkv(q: &ComplexMatrix, k: &ComplexMatrix, v: &ComplexMatrix) -> Result<()> {
    if q.rows() == 0 {
        return Err(dim_err("attention", "sequence length must be at least 1"));
    }
    if q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0 {
        return Err(dim_err(
            "attention",
            format!("Q {:?}, K {:?}, V {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    Ok(())
}

/// Full holographic attention with its trace.
pub fn holographic_attention(
    q: &ComplexMatrix,
    k: &ComplexMatrix,
    v: &ComplexMatrix,
    cfg: &AttentionConfig,
) -> Result<AttentionTrace> {
    holographic_attention_with_mask(q, k, v, cfg, None)
}

/// Holographic attention where the softmax weights are multiplied by
/// `weight_mask` (inverted dropout) before aggregation.
pub fn holographic_attention_with_mask(
    q: &ComplexMatrix,
    k: &ComplexMatrix,
    v: &ComplexMatrix,
    cfg: &AttentionConfig,
    weight_mask: Option<&RealMatrix>,
) -> Result<AttentionTrace> {
    check_qkv(q, k, v)?;
    let s = correlate(q, k)?;
    let sim = similarity(&s, q, k, cfg.eps)?;
    let delta_phi = phase_offsets(&s);
    let w = score(&sim, &delta_phi, q.cols(), cfg)?;
    let weights = row_softmax(&w);
    let output = match weight_mask {
        Some(mask) => {
            if mask.shape() != weights.shape() {
                return Err(dim_err("attention dropout", "mask shape"));
            }
            let dropped = RealMatrix::from_fn(weights.rows(), weights.cols(), |i, j| {
                weights.get(i, j) * mask.get(i, j)
            });
            superpose(&dropped, &delta_phi, v, !cfg.ablate_coherent_sum)?
        }
        None => superpose(&weights, &delta_phi, v, !cfg.ablate_coherent_sum)?,
    };
    Ok(AttentionTrace {
        s,
        delta_phi,
        sim,
        w,
        weights,
        output,
    })
}

/// Output of holographic attention for prescribed similarities and phase
/// offsets; used to probe sensitivity to phase perturbations.
pub fn output_from_phases(
    sim: &RealMatrix,
    delta_phi: &RealMatrix,
    v: &ComplexMatrix,
    cfg: &AttentionConfig,
) -> Result<ComplexMatrix> {
    let w = score(sim, delta_phi, v.cols(), cfg)?;
    superpose(&row_softmax(&w), delta_phi, v, !cfg.ablate_coherent_sum)
}

/// Cosine attention without phase decay or rotation:
/// `softmax(sim/√d_k)` applied as a plain weighted sum of values.
pub fn standard_cosine_attention(
    q: &ComplexMatrix,
    k: &ComplexMatrix,
    v: &ComplexMatrix,
    eps: f64,
) -> Result<ComplexMatrix> {
    check_qkv(q, k, v)?;
    let s = correlate(q, k)?;
    let sim = similarity(&s, q, k, eps)?;
    let inv = 1.0 / (q.cols() as f64).sqrt();
    let weights = row_softmax(&sim.map(|x| x * inv));
    let zero = RealMatrix::zeros(weights.rows(), weights.cols());
    superpose(&weights, &zero, v, false)
}

/// Projection matrices for multi-head attention. Head `h` uses
/// `X·wq[h]`, `X·wk[h]`, `X·wv[h]` (each `d_model × d_k`); the concatenated
/// head outputs are mapped by `wo` (`d_model × d_model`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiHeadParams {
    pub wq: Vec<ComplexMatrix>,
    pub wk: Vec<ComplexMatrix>,
    pub wv: Vec<ComplexMatrix>,
    pub wo: ComplexMatrix,
}

impl MultiHeadParams {
    /// Identity-style projections: head `h` reads and writes its own block of
    /// `d_k` features.
    pub fn block_identity(d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(HoloError::Config(format!(
                "d_model {d_model} not divisible by {heads} heads"
            )));
        }
        let d_k = d_model / heads;
        let block = |h: usize| {
            ComplexMatrix::from_fn(d_model, d_k, |r, c| {
                if r == h * d_k + c {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        };
        let blocks: Vec<_> = (0..heads).map(block).collect();
        Ok(Self {
            wq: blocks.clone(),
            wk: blocks.clone(),
            wv: blocks,
            wo: ComplexMatrix::identity(d_model),
        })
    }
}

/// Multi-head holographic attention over `x` (`T × d_model`).
pub fn multi_head(
    x: &ComplexMatrix,
    params: &MultiHeadParams,
    cfg: &AttentionConfig,
) -> Result<(ComplexMatrix, Vec<AttentionTrace>)> {
    let d_k = cfg.head_dim(x.cols())?;
    let heads = cfg.heads;
    if params.wq.len() != heads || params.wk.len() != heads || params.wv.len() != heads {
        return Err(HoloError::Config(format!(
            "expected {} head projections, got {}/{}/{}",
            heads,
            params.wq.len(),
            params.wk.len(),
            params.wv.len()
        )));
    }
    let mut traces = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = x.matmul(&params.wq[h])?;
        let k = x.matmul(&params.wk[h])?;
        let v = x.matmul(&params.wv[h])?;
        if q.cols() != d_k || v.cols() != d_k {
            return Err(dim_err(
                "multi_head",
                format!("head {h} projects to width {} instead of {d_k}", q.cols()),
            ));
        }
        traces.push(holographic_attention(&q, &k, &v, cfg)?);
    }
    let outs: Vec<&ComplexMatrix> = traces.iter().map(|t| &t.output).collect();
    let concat = ComplexMatrix::concat_cols(&outs)?;
    Ok((concat.matmul(&params.wo)?, traces))
}

/// Gradients of a holographic attention call with respect to Q, K and V.
///
/// `grad_out` uses the real-pair convention `∂L/∂Re + j·∂L/∂Im`.
pub(crate) fn attention_backward(
    q: &ComplexMatrix,
    k: &ComplexMatrix,
    v: &ComplexMatrix,
    trace: &AttentionTrace,
    cfg: &AttentionConfig,
    weight_mask: Option<&RealMatrix>,
    grad_out: &ComplexMatrix,
) -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
    let t_q = q.rows();
    let t_k = k.rows();
    let inv_sqrt_dk = 1.0 / (q.cols() as f64).sqrt();
    let coherent = !cfg.ablate_coherent_sum;

    let mut gq = ComplexMatrix::zeros(q.rows(), q.cols());
    let mut gk = ComplexMatrix::zeros(k.rows(), k.cols());
    let mut gv = ComplexMatrix::zeros(v.rows(), v.cols());

    let qn: Vec<f64> = (0..t_q).map(|i| q.row_norm(i)).collect();
    let kn: Vec<f64> = (0..t_k).map(|j| k.row_norm(j)).collect();
    let mut g_qn = vec![0.0; t_q];
    let mut g_kn = vec![0.0; t_k];
    let mut g_s = ComplexMatrix::zeros(t_q, t_k);

    let mut g_a = vec![0.0; t_k];
    let mut g_phi = vec![0.0; t_k];
    for i in 0..t_q {
        let gh = grad_out.row(i);
        for j in 0..t_k {
            let dphi = trace.delta_phi.get(i, j);
            let rot = if coherent { phasor(dphi) } else { C64::new(1.0, 0.0) };
            let mask = weight_mask.map_or(1.0, |m| m.get(i, j));
            let a_eff = trace.weights.get(i, j) * mask;
            // H_i = Σ_j u_ij V_j with u_ij = a_eff·rot.
            let u = rot * a_eff;
            let uc = u.conj();
            for (g, gh_c) in gv.row_mut(j).iter_mut().zip(gh) {
                *g += uc * gh_c;
            }
            let g_u = cdot_unchecked(gh, v.row(j));
            let conj_gu_rot = g_u.conj() * rot;
            g_a[j] = conj_gu_rot.re * mask;
            g_phi[j] = if coherent { -a_eff * conj_gu_rot.im } else { 0.0 };
        }
        // softmax backward
        let arow = trace.weights.row(i);
        let dot: f64 = arow.iter().zip(&g_a).map(|(a, g)| a * g).sum();
        for j in 0..t_k {
            let g_w = arow[j] * (g_a[j] - dot);
            let sim = trace.sim.get(i, j);
            let dphi = trace.delta_phi.get(i, j);
            let sign = if dphi > 0.0 {
                1.0
            } else if dphi < 0.0 {
                -1.0
            } else {
                0.0
            };
            let g_sim = if cfg.ablate_phase_decay {
                g_w * inv_sqrt_dk
            } else {
                match cfg.additive_gamma {
                    Some(gamma) => {
                        g_phi[j] += -gamma * sign * g_w;
                        g_w * inv_sqrt_dk
                    }
                    None => {
                        let decay = (-cfg.alpha * dphi.abs()).exp();
                        g_phi[j] += g_w * sim * inv_sqrt_dk * decay * (-cfg.alpha * sign);
                        g_w * inv_sqrt_dk * decay
                    }
                }
            };
            let s = trace.s.get(i, j);
            let den = qn[i] * kn[j] + cfg.eps;
            let mut gs = C64::new(g_sim / den, 0.0);
            let g_den = -g_sim * s.re / (den * den);
            g_qn[i] += g_den * kn[j];
            g_kn[j] += g_den * qn[i];
            let mag2 = s.norm_sqr();
            if mag2 > 0.0 {
                let mag2 = mag2.max(1e-24);
                // ∂φ/∂re = −im/|s|², ∂φ/∂im = re/|s|²
                gs += C64::new(-s.im, s.re) * (g_phi[j] / mag2);
            }
            g_s.set(i, j, gs);
        }
    }

    // s_ij = <Q_i, K_j>: G_Q = G_S K, G_K = G_S^H Q
    for i in 0..t_q {
        for j in 0..t_k {
            let gs = g_s.get(i, j);
            if gs.re == 0.0 && gs.im == 0.0 {
                continue;
            }
            let gsc = gs.conj();
            for c in 0..q.cols() {
                let kv = k.get(j, c);
                let qv = q.get(i, c);
                gq.row_mut(i)[c] += gs * kv;
                gk.row_mut(j)[c] += gsc * qv;
            }
        }
    }
    for i in 0..t_q {
        if qn[i] > 0.0 && g_qn[i] != 0.0 {
            let f = g_qn[i] / qn[i];
            let src: Vec<C64> = q.row(i).to_vec();
            for (g, x) in gq.row_mut(i).iter_mut().zip(src) {
                *g += x * f;
            }
        }
    }
    for j in 0..t_k {
        if kn[j] > 0.0 && g_kn[j] != 0.0 {
            let f = g_kn[j] / kn[j];
            let src: Vec<C64> = k.row(j).to_vec();
            for (g, x) in gk.row_mut(j).iter_mut().zip(src) {
                *g += x * f;
            }
        }
    }
    (gq, gk, gv)
}

/// Row softmax of one slice, exposed for the score-calibration checks.
pub fn softmax_vec(scores: &[f64]) -> Vec<f64> {
    let mut out = scores.to_vec();
    softmax_in_place(&mut out);
    out
}
