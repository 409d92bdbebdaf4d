//! Tape-based reverse-mode differentiation over complex matrices.
//!
//! Every node holds a [`ComplexMatrix`]. Real-valued quantities (logits,
//! losses) are stored with a zero imaginary part. Gradients use the
//! real-pair convention: the gradient of a real objective `L` with respect
//! to `z = x + jy` is stored as `∂L/∂x + j·∂L/∂y`. With that convention a
//! product `y = c·x` back-propagates as `G_x = conj(c)·G_y`, which is the
//! Wirtinger cogradient up to a factor of two.

use crate::attention::{attention_backward, holographic_attention_with_mask, AttentionConfig, AttentionTrace};
use crate::ctensor::{angle, cdot_unchecked, normalize_rows, wrap_angle, ComplexMatrix, RealMatrix, C64};
use crate::error::{dim_err, HoloError, Result};

use super::params::{ParamId, ParamStore};

pub type NodeId = usize;

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Normalize { x: NodeId, sigmas: Vec<f64> },
    SplitRelu(NodeId),
    Mask { x: NodeId, mask: Vec<f64> },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        cfg: AttentionConfig,
        trace: Box<AttentionTrace>,
        mask: Option<RealMatrix>,
    },
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    MeanRows(NodeId),
    ReImConcat(NodeId),
    Reshape(NodeId),
    SumRe(NodeId),
    CrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    MeanSquared { x: NodeId, target: ComplexMatrix },
    PhaseReg(NodeId),
    LinearComb(Vec<(NodeId, f64)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Normalize { .. } => "layer_norm",
            Op::SplitRelu(_) => "split_relu",
            Op::Mask { .. } => "dropout",
            Op::Attention { .. } => "attention",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::MeanRows(_) => "mean_rows",
            Op::ReImConcat(_) => "re_im_concat",
            Op::Reshape(_) => "reshape",
            Op::SumRe(_) => "sum_re",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::MeanSquared { .. } => "mean_squared",
            Op::PhaseReg(_) => "phase_reg",
            Op::LinearComb(_) => "linear_comb",
        }
    }
}

struct Node {
    value: ComplexMatrix,
    op: Op,
    label: Option<String>,
}

/// Records a forward computation for later differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<ComplexMatrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&ComplexMatrix> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

fn scalar(x: f64) -> ComplexMatrix {
    ComplexMatrix::new(1, 1, vec![C64::new(x, 0.0)]).expect("1x1")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ComplexMatrix, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            label: None,
        });
        self.nodes.len() - 1
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id >= self.nodes.len() {
            return Err(HoloError::Graph(format!("node {id} was never recorded")));
        }
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> &ComplexMatrix {
        &self.nodes[id].value
    }

    /// Real part of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id].value.get(0, 0).re
    }

    /// Attaches a human-readable name used in diagnostics.
    pub fn set_label(&mut self, id: NodeId, label: impl Into<String>) {
        self.nodes[id].label = Some(label.into());
    }

    /// The attention trace recorded at `id`, if that node is an attention op.
    pub fn trace(&self, id: NodeId) -> Option<&AttentionTrace> {
        match &self.nodes[id].op {
            Op::Attention { trace, .. } => Some(trace),
            _ => None,
        }
    }

    /// Description of the first node holding a NaN/Inf, in recording order.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            if n.value.is_finite() {
                None
            } else {
                Some(match &n.label {
                    Some(l) => format!("{l} (node {i}, {})", n.op.name()),
                    None => format!("node {i} ({})", n.op.name()),
                })
            }
        })
    }

    pub fn input(&mut self, value: ComplexMatrix) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let p = store.get(id);
        let node = self.push(p.value.clone(), Op::Param(id));
        self.nodes[node].label = Some(p.name.clone());
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// `x + bias` with a `1 × cols` bias broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(bias)?;
        if self.value(bias).rows() != 1 {
            return Err(dim_err("add_row", "bias must be a single row"));
        }
        let v = self.value(x).add_row_vector(self.value(bias).row(0))?;
        Ok(self.push(v, Op::AddRow(x, bias)))
    }

    /// `x ⊙ gain` with a `1 × cols` gain broadcast over rows.
    pub fn mul_row(&mut self, x: NodeId, gain: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(gain)?;
        let (xv, gv) = (self.value(x), self.value(gain));
        if gv.rows() != 1 || gv.cols() != xv.cols() {
            return Err(dim_err(
                "mul_row",
                format!("gain {:?} for {:?}", gv.shape(), xv.shape()),
            ));
        }
        let g = gv.row(0).to_vec();
        let mut v = xv.clone();
        for t in 0..v.rows() {
            for (z, gc) in v.row_mut(t).iter_mut().zip(&g) {
                *z *= gc;
            }
        }
        Ok(self.push(v, Op::MulRow(x, gain)))
    }

    /// Per-row centering and scaling `(z − μ)/σ`.
    pub fn normalize(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        self.check(x)?;
        if !(eps > 0.0) {
            return Err(HoloError::Config(format!("layer norm eps must be positive, got {eps}")));
        }
        let (v, sigmas) = normalize_rows(self.value(x), eps);
        Ok(self.push(v, Op::Normalize { x, sigmas }))
    }

    /// ReLU applied separately to real and imaginary parts.
    pub fn split_relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).map(|z| C64::new(z.re.max(0.0), z.im.max(0.0)));
        Ok(self.push(v, Op::SplitRelu(x)))
    }

    /// Entrywise multiplication by a fixed real mask (inverted dropout).
    pub fn mask(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        self.check(x)?;
        if mask.len() != self.value(x).len() {
            return Err(dim_err("mask", "mask length"));
        }
        let mut v = self.value(x).clone();
        for (z, m) in v.data_mut().iter_mut().zip(&mask) {
            *z *= m;
        }
        Ok(self.push(v, Op::Mask { x, mask }))
    }

    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        cfg: &AttentionConfig,
        mask: Option<RealMatrix>,
    ) -> Result<NodeId> {
        self.check(q)?;
        self.check(k)?;
        self.check(v)?;
        let trace = holographic_attention_with_mask(
            self.value(q),
            self.value(k),
            self.value(v),
            cfg,
            mask.as_ref(),
        )?;
        let out = trace.output.clone();
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                cfg: cfg.clone(),
                trace: Box::new(trace),
                mask,
            },
        ))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).slice_cols(start, len)?;
        Ok(self.push(v, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        for &p in parts {
            self.check(p)?;
        }
        let refs: Vec<&ComplexMatrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = ComplexMatrix::concat_cols(&refs)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).mean_rows();
        Ok(self.push(v, Op::MeanRows(x)))
    }

    /// `1 × d` complex row to `1 × 2d` real row `[Re, Im]`.
    pub fn re_im_concat(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.rows() != 1 {
            return Err(dim_err("re_im_concat", "expects a single row"));
        }
        let d = xv.cols();
        let v = ComplexMatrix::from_fn(1, 2 * d, |_, j| {
            let z = xv.get(0, j % d);
            C64::new(if j < d { z.re } else { z.im }, 0.0)
        });
        Ok(self.push(v, Op::ReImConcat(x)))
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        self.check(x)?;
        let v = self.value(x).clone().reshape(rows, cols)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Scalar `Σ Re(x)`.
    pub fn sum_re(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let s: f64 = self.value(x).data().iter().map(|z| z.re).sum();
        Ok(self.push(scalar(s), Op::SumRe(x)))
    }

    /// Softmax cross-entropy of a `1 × K` real logit row against `label`.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        self.check(logits)?;
        let lv = self.value(logits);
        if lv.rows() != 1 {
            return Err(dim_err("cross_entropy", "logits must be a single row"));
        }
        let row: Vec<f64> = lv.row(0).iter().map(|z| z.re).collect();
        let loss = crate::model::cross_entropy(&row, label)?;
        let probs = crate::attention::softmax_vec(&row);
        Ok(self.push(scalar(loss), Op::CrossEntropy { logits, label, probs }))
    }

    /// Scalar mean of `|x − target|²`.
    pub fn mean_squared(&mut self, x: NodeId, target: &ComplexMatrix) -> Result<NodeId> {
        self.check(x)?;
        let loss = crate::model::recon_loss(self.value(x), target)?;
        Ok(self.push(
            scalar(loss),
            Op::MeanSquared {
                x,
                target: target.clone(),
            },
        ))
    }

    /// Scalar mean wrapped L1 phase increment between consecutive rows.
    pub fn phase_reg(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let r = crate::model::phase_reg(self.value(x));
        Ok(self.push(scalar(r), Op::PhaseReg(x)))
    }

    /// Scalar `Σ w_k · x_k` over scalar nodes.
    pub fn linear_comb(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut s = 0.0;
        for &(id, w) in terms {
            self.check(id)?;
            if self.value(id).shape() != (1, 1) {
                return Err(dim_err("linear_comb", "terms must be scalars"));
            }
            s += w * self.scalar(id);
        }
        Ok(self.push(scalar(s), Op::LinearComb(terms.to_vec())))
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check(loss)?;
        if self.value(loss).shape() != (1, 1) {
            return Err(HoloError::Graph("backward expects a scalar loss node".into()));
        }
        let mut grads: Vec<Option<ComplexMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(scalar(1.0));

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = grad_matmul_left(&g, bv);
                    let gb = grad_matmul_right(av, &g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(x, bias) => {
                    accumulate(&mut grads, *bias, g.mean_rows().scale(C64::new(g.rows() as f64, 0.0)));
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::MulRow(x, gain) => {
                    let (xv, gv) = (self.value(*x), self.value(*gain));
                    let mut gx = g.clone();
                    let mut gg = ComplexMatrix::zeros(1, gv.cols());
                    for t in 0..g.rows() {
                        for c in 0..g.cols() {
                            let gy = g.get(t, c);
                            gx.set(t, c, gy * gv.get(0, c).conj());
                            let acc = gg.get(0, c) + xv.get(t, c).conj() * gy;
                            gg.set(0, c, acc);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gain, gg);
                }
                Op::Normalize { x, sigmas } => {
                    let y = &node.value;
                    let n = y.cols() as f64;
                    let mut gx = ComplexMatrix::zeros(y.rows(), y.cols());
                    for t in 0..y.rows() {
                        let sigma = sigmas[t];
                        let gy = g.row(t);
                        let yr = y.row(t);
                        // c = y·σ; ∂L/∂σ = −(1/σ²) Σ Re(conj(G_y) c)
                        let dot: f64 = gy.iter().zip(yr).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
                        let g_sigma = -dot / sigma;
                        let row = gx.row_mut(t);
                        let mut mean = C64::new(0.0, 0.0);
                        for ((o, gyc), yc) in row.iter_mut().zip(gy).zip(yr) {
                            *o = gyc / sigma + yc * (g_sigma / n);
                            mean += *o;
                        }
                        mean /= n;
                        for o in row.iter_mut() {
                            *o -= mean;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SplitRelu(x) => {
                    let xv = self.value(*x);
                    let mut gx = g.clone();
                    for (o, z) in gx.data_mut().iter_mut().zip(xv.data()) {
                        if z.re <= 0.0 {
                            o.re = 0.0;
                        }
                        if z.im <= 0.0 {
                            o.im = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mask { x, mask } => {
                    let mut gx = g.clone();
                    for (o, m) in gx.data_mut().iter_mut().zip(mask) {
                        *o *= m;
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Attention { q, k, v, cfg, trace, mask } => {
                    let (gq, gk, gv) = attention_backward(
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        trace,
                        cfg,
                        mask.as_ref(),
                        &g,
                    );
                    accumulate(&mut grads, *q, gq);
                    accumulate(&mut grads, *k, gk);
                    accumulate(&mut grads, *v, gv);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut gx = ComplexMatrix::zeros(xv.rows(), xv.cols());
                    for t in 0..g.rows() {
                        gx.row_mut(t)[*start..*start + g.cols()].copy_from_slice(g.row(t));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let gp = g.slice_cols(offset, w)?;
                        offset += w;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::MeanRows(x) => {
                    let xv = self.value(*x);
                    let inv = 1.0 / xv.rows() as f64;
                    let gx = ComplexMatrix::from_fn(xv.rows(), xv.cols(), |_, c| g.get(0, c) * inv);
                    accumulate(&mut grads, *x, gx);
                }
                Op::ReImConcat(x) => {
                    let d = self.value(*x).cols();
                    let gx = ComplexMatrix::from_fn(1, d, |_, c| C64::new(g.get(0, c).re, g.get(0, d + c).re));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Reshape(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, g.clone().reshape(r, c)?);
                }
                Op::SumRe(x) => {
                    let gs = g.get(0, 0).re;
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, ComplexMatrix::from_fn(xv.rows(), xv.cols(), |_, _| C64::new(gs, 0.0)));
                }
                Op::CrossEntropy { logits, label, probs } => {
                    let gs = g.get(0, 0).re;
                    let gl = ComplexMatrix::from_fn(1, probs.len(), |_, j| {
                        let onehot = if j == *label { 1.0 } else { 0.0 };
                        C64::new(gs * (probs[j] - onehot), 0.0)
                    });
                    accumulate(&mut grads, *logits, gl);
                }
                Op::MeanSquared { x, target } => {
                    let gs = g.get(0, 0).re;
                    let xv = self.value(*x);
                    let f = 2.0 * gs / xv.len() as f64;
                    let mut gx = xv.sub(target)?;
                    for z in gx.data_mut() {
                        *z *= f;
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::PhaseReg(x) => {
                    let gs = g.get(0, 0).re;
                    accumulate(&mut grads, *x, phase_reg_grad(self.value(*x), gs));
                }
                Op::LinearComb(terms) => {
                    let gs = g.get(0, 0).re;
                    for &(t, w) in terms {
                        accumulate(&mut grads, t, scalar(gs * w));
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Smallest distance from any recorded quantity to a point where the
    /// graph is not differentiable: phase offsets at 0 or ±π, split-ReLU
    /// inputs at 0, and wrapped phase steps at 0 or ±π.
    pub fn kink_distance(&self) -> f64 {
        let to_phase_kink = |p: f64| {
            let a = p.abs();
            a.min(std::f64::consts::PI - a)
        };
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Attention { trace, .. } => {
                    for &p in trace.delta_phi.data() {
                        best = best.min(to_phase_kink(p));
                    }
                }
                Op::SplitRelu(x) => {
                    for z in self.nodes[*x].value.data() {
                        best = best.min(z.re.abs()).min(z.im.abs());
                    }
                }
                Op::PhaseReg(x) => {
                    let z = &self.nodes[*x].value;
                    for t in 1..z.rows() {
                        for c in 0..z.cols() {
                            let step = wrap_angle(angle(z.get(t, c)) - angle(z.get(t - 1, c)));
                            best = best.min(to_phase_kink(step));
                        }
                    }
                }
                _ => {}
            }
        }
        best
    }

    /// Adds `scale ×` the gradient of every parameter leaf into the store's
    /// buffers.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore, scale: f64) {
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                if let Some(g) = grads.get(id) {
                    let p = store.get_mut(pid);
                    let real_only = p.real_only;
                    for (dst, src) in p.grad.data_mut().iter_mut().zip(g.data()) {
                        dst.re += scale * src.re;
                        if !real_only {
                            dst.im += scale * src.im;
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<ComplexMatrix>], id: NodeId, g: ComplexMatrix) {
    match &mut grads[id] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// `G · Bᴴ`
fn grad_matmul_left(g: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(g.rows(), b.rows(), |i, k| cdot_unchecked(g.row(i), b.row(k)))
}

/// `Aᴴ · G`
fn grad_matmul_right(a: &ComplexMatrix, g: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.cols(), g.cols());
    for i in 0..a.rows() {
        let gi = g.row(i);
        for k in 0..a.cols() {
            let ac = a.get(i, k).conj();
            if ac.re == 0.0 && ac.im == 0.0 {
                continue;
            }
            for (o, gv) in out.row_mut(k).iter_mut().zip(gi) {
                o.re += ac.re * gv.re - ac.im * gv.im;
                o.im += ac.re * gv.im + ac.im * gv.re;
            }
        }
    }
    out
}

fn phase_reg_grad(z: &ComplexMatrix, gs: f64) -> ComplexMatrix {
    let (t_len, d) = z.shape();
    let mut out = ComplexMatrix::zeros(t_len, d);
    if t_len < 2 || d == 0 {
        return out;
    }
    let scale = gs / ((t_len - 1) * d) as f64;
    let mut g_phi = vec![0.0; t_len * d];
    for t in 0..t_len - 1 {
        for c in 0..d {
            let delta = wrap_angle(angle(z.get(t + 1, c)) - angle(z.get(t, c)));
            let sign = if delta > 0.0 {
                1.0
            } else if delta < 0.0 {
                -1.0
            } else {
                0.0
            };
            g_phi[(t + 1) * d + c] += sign * scale;
            g_phi[t * d + c] -= sign * scale;
        }
    }
    for (idx, o) in out.data_mut().iter_mut().enumerate() {
        let w = z.data()[idx];
        let mag2 = w.norm_sqr();
        if mag2 > 0.0 && g_phi[idx] != 0.0 {
            *o = C64::new(-w.im, w.re) * (g_phi[idx] / mag2.max(1e-24));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn re_of_leaf() {
        let mut store = ParamStore::new();
        let id = store.insert("z", ComplexMatrix::new(1, 1, vec![c(0.7, -2.0)]).unwrap(), false).unwrap();
        let mut tape = Tape::new();
        let z = tape.param(&store, id);
        let loss = tape.sum_re(z).unwrap();
        let g = tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&g, &mut store, 1.0);
        assert_eq!(store.get(id).grad.get(0, 0), c(1.0, 0.0));
    }

    #[test]
    fn squared_modulus_gradient() {
        let mut store = ParamStore::new();
        let id = store.insert("z", ComplexMatrix::new(1, 1, vec![c(3.0, 4.0)]).unwrap(), false).unwrap();
        let mut tape = Tape::new();
        let z = tape.param(&store, id);
        let loss = tape.mean_squared(z, &ComplexMatrix::zeros(1, 1)).unwrap();
        assert_eq!(tape.scalar(loss), 25.0);
        let g = tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&g, &mut store, 1.0);
        assert_eq!(store.get(id).grad.get(0, 0), c(6.0, 8.0));
    }

    #[test]
    fn backward_rejects_bad_nodes() {
        let mut tape = Tape::new();
        let x = tape.input(ComplexMatrix::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(HoloError::Graph(_))));
        assert!(matches!(tape.backward(7), Err(HoloError::Graph(_))));
        assert!(tape.matmul(x, 9).is_err());
    }

    #[test]
    fn non_finite_is_located() {
        let mut tape = Tape::new();
        let a = tape.input(ComplexMatrix::new(1, 1, vec![c(1.0, 0.0)]).unwrap());
        let b = tape.input(ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]).unwrap());
        tape.set_label(b, "bad input");
        let _ = tape.add(a, b).unwrap();
        assert!(tape.first_non_finite().unwrap().starts_with("bad input"));
    }
}
