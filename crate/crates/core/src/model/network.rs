use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attention::AttentionTrace;
use crate::autodiff::{NodeId, ParamId, ParamStore, Tape};
use crate::ctensor::{ComplexMatrix, RealMatrix, C64};
use crate::error::{dim_err, HoloError, Result};

use super::{positional_encoding, LossBreakdown, ModelConfig, Target, TaskKind, TaskOutput};

/// Parameter handles of one encoder layer.
#[derive(Clone, Debug)]
pub struct LayerIds {
    pub wq: Vec<ParamId>,
    pub wk: Vec<ParamId>,
    pub wv: Vec<ParamId>,
    pub wo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

/// Encoder plus reconstruction and task heads.
#[derive(Clone, Debug)]
pub struct HoloModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    embed: ParamId,
    layers: Vec<LayerIds>,
    recon: ParamId,
    task_w: ParamId,
    task_b: ParamId,
}

/// Nodes produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardNodes {
    pub input: NodeId,
    /// Final encoder output `Z_L`.
    pub z: NodeId,
    pub recon: NodeId,
    /// Logit row or flattened prediction row.
    pub task: NodeId,
    /// Attention nodes, `[layer][head]`.
    pub attention: Vec<Vec<NodeId>>,
}

/// Scalar loss nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub recon: NodeId,
    pub task: NodeId,
    pub phase: NodeId,
    pub total: NodeId,
}

fn complex_normal(rows: usize, cols: usize, var: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let s = (var / 2.0).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * s, im * s)
    })
}

fn real_normal(rows: usize, cols: usize, var: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let s = var.sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        C64::new(re * s, 0.0)
    })
}

fn ones_row(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(1, n, |_, _| C64::new(1.0, 0.0))
}

fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

impl HoloModel {
    /// Fresh model with seeded complex Gaussian initialization.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.d_model;
        let d_k = cfg.d_k();

        let embed = store.insert("embed.w", complex_normal(cfg.d_in, d, 1.0 / cfg.d_in as f64, &mut rng), false)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let mut wq = Vec::new();
            let mut wk = Vec::new();
            let mut wv = Vec::new();
            for h in 0..cfg.heads {
                wq.push(store.insert(p(&format!("attn.head{h}.wq")), complex_normal(d, d_k, 1.0 / d as f64, &mut rng), false)?);
                wk.push(store.insert(p(&format!("attn.head{h}.wk")), complex_normal(d, d_k, 1.0 / d as f64, &mut rng), false)?);
                wv.push(store.insert(p(&format!("attn.head{h}.wv")), complex_normal(d, d_k, 1.0 / d as f64, &mut rng), false)?);
            }
            let wo = store.insert(p("attn.wo"), complex_normal(d, d, 1.0 / d as f64, &mut rng), false)?;
            let ln1_gain = store.insert(p("ln1.gain"), ones_row(d), false)?;
            let ln1_bias = store.insert(p("ln1.bias"), ComplexMatrix::zeros(1, d), false)?;
            let w1 = store.insert(p("ffn.w1"), complex_normal(d, cfg.d_ff, 1.0 / d as f64, &mut rng), false)?;
            let b1 = store.insert(p("ffn.b1"), ComplexMatrix::zeros(1, cfg.d_ff), false)?;
            let w2 = store.insert(p("ffn.w2"), complex_normal(cfg.d_ff, d, 1.0 / cfg.d_ff as f64, &mut rng), false)?;
            let b2 = store.insert(p("ffn.b2"), ComplexMatrix::zeros(1, d), false)?;
            let ln2_gain = store.insert(p("ln2.gain"), ones_row(d), false)?;
            let ln2_bias = store.insert(p("ln2.bias"), ComplexMatrix::zeros(1, d), false)?;
            layers.push(LayerIds {
                wq,
                wk,
                wv,
                wo,
                ln1_gain,
                ln1_bias,
                w1,
                b1,
                w2,
                b2,
                ln2_gain,
                ln2_bias,
            });
        }
        let recon = store.insert("recon.w", complex_normal(d, cfg.d_in, 1.0 / d as f64, &mut rng), false)?;
        let (task_w, task_b) = match cfg.task {
            TaskKind::Classification { num_classes } => (
                store.insert("task.w", real_normal(2 * d, num_classes, 1.0 / (2 * d) as f64, &mut rng), true)?,
                store.insert("task.b", ComplexMatrix::zeros(1, num_classes), true)?,
            ),
            TaskKind::Regression { d_out, horizon } => {
                let fan_in = cfg.seq_len * d;
                (
                    store.insert("task.w", complex_normal(fan_in, horizon * d_out, 1.0 / fan_in as f64, &mut rng), false)?,
                    store.insert("task.b", ComplexMatrix::zeros(1, horizon * d_out), false)?,
                )
            }
        };
        Ok(Self {
            cfg,
            store,
            embed,
            layers,
            recon,
            task_w,
            task_b,
        })
    }

    /// Rebuilds a model around an existing parameter store, checking that
    /// every expected tensor is present with the right shape.
    pub fn from_store(cfg: ModelConfig, store: ParamStore) -> Result<Self> {
        let template = Self::new(cfg, 0)?;
        if template.store.len() != store.len() {
            return Err(HoloError::Format(format!(
                "expected {} parameter tensors, found {}",
                template.store.len(),
                store.len()
            )));
        }
        for p in template.store.iter() {
            let q = store
                .by_name(&p.name)
                .ok_or_else(|| HoloError::Format(format!("missing parameter `{}`", p.name)))?;
            if q.value.shape() != p.value.shape() || q.real_only != p.real_only {
                return Err(HoloError::Format(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    q.value.shape(),
                    p.value.shape()
                )));
            }
        }
        let lookup = |id: ParamId| store.id(&template.store.get(id).name).expect("checked above");
        let layers = template
            .layers
            .iter()
            .map(|l| LayerIds {
                wq: l.wq.iter().map(|&i| lookup(i)).collect(),
                wk: l.wk.iter().map(|&i| lookup(i)).collect(),
                wv: l.wv.iter().map(|&i| lookup(i)).collect(),
                wo: lookup(l.wo),
                ln1_gain: lookup(l.ln1_gain),
                ln1_bias: lookup(l.ln1_bias),
                w1: lookup(l.w1),
                b1: lookup(l.b1),
                w2: lookup(l.w2),
                b2: lookup(l.b2),
                ln2_gain: lookup(l.ln2_gain),
                ln2_bias: lookup(l.ln2_bias),
            })
            .collect();
        Ok(Self {
            embed: lookup(template.embed),
            recon: lookup(template.recon),
            task_w: lookup(template.task_w),
            task_b: lookup(template.task_b),
            layers,
            cfg: template.cfg,
            store,
        })
    }

    pub fn layer_ids(&self) -> &[LayerIds] {
        &self.layers
    }

    pub fn embed_id(&self) -> ParamId {
        self.embed
    }

    pub fn recon_id(&self) -> ParamId {
        self.recon
    }

    pub fn task_ids(&self) -> (ParamId, ParamId) {
        (self.task_w, self.task_b)
    }

    fn check_input(&self, x: &ComplexMatrix) -> Result<()> {
        if x.shape() != (self.cfg.seq_len, self.cfg.d_in) {
            return Err(dim_err(
                "model input",
                format!(
                    "got {:?}, expected ({}, {})",
                    x.shape(),
                    self.cfg.seq_len,
                    self.cfg.d_in
                ),
            ));
        }
        Ok(())
    }

    fn layer_norm(&self, tape: &mut Tape, x: NodeId, gain: ParamId, bias: ParamId) -> Result<NodeId> {
        let n = tape.normalize(x, self.cfg.ln_eps)?;
        let g = tape.param(&self.store, gain);
        let b = tape.param(&self.store, bias);
        let scaled = tape.mul_row(n, g)?;
        tape.add_row(scaled, b)
    }

    /// Records the forward pass. Dropout is active only when `rng` is given.
    pub fn forward(&self, tape: &mut Tape, x: &ComplexMatrix, mut rng: Option<&mut ChaCha8Rng>) -> Result<ForwardNodes> {
        self.check_input(x)?;
        let cfg = &self.cfg;
        let attn_cfg = cfg.attention();
        let d_k = cfg.d_k();
        let t_len = x.rows();
        let p_drop = if rng.is_some() { cfg.dropout } else { 0.0 };

        let ingested = if cfg.magnitude_only { x.magnitudes() } else { x.clone() };
        let input = tape.input(ingested);
        tape.set_label(input, "input");
        let we = tape.param(&self.store, self.embed);
        let mut z = tape.matmul(input, we)?;
        if cfg.positional_encoding {
            let pe = tape.input(positional_encoding(t_len, cfg.d_model));
            z = tape.add(z, pe)?;
        }
        tape.set_label(z, "embedding");

        let mut attention = Vec::with_capacity(self.layers.len());
        for (l, ids) in self.layers.iter().enumerate() {
            let mut heads = Vec::with_capacity(cfg.heads);
            let mut head_nodes = Vec::with_capacity(cfg.heads);
            for h in 0..cfg.heads {
                let wq = tape.param(&self.store, ids.wq[h]);
                let wk = tape.param(&self.store, ids.wk[h]);
                let wv = tape.param(&self.store, ids.wv[h]);
                let q = tape.matmul(z, wq)?;
                let k = tape.matmul(z, wk)?;
                let v = tape.matmul(z, wv)?;
                let mask = match rng.as_deref_mut() {
                    Some(r) if p_drop > 0.0 => Some(RealMatrix::new(t_len, t_len, dropout_mask(t_len * t_len, p_drop, r))?),
                    _ => None,
                };
                let a = tape.attention(q, k, v, &attn_cfg, mask)?;
                tape.set_label(a, format!("layer{l}.attn.head{h}"));
                debug_assert_eq!(tape.value(a).cols(), d_k);
                heads.push(a);
                head_nodes.push(a);
            }
            let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
            let wo = tape.param(&self.store, ids.wo);
            let mha = tape.matmul(cat, wo)?;
            let res = tape.add(z, mha)?;
            z = self.layer_norm(tape, res, ids.ln1_gain, ids.ln1_bias)?;
            tape.set_label(z, format!("layer{l}.ln1"));

            let w1 = tape.param(&self.store, ids.w1);
            let b1 = tape.param(&self.store, ids.b1);
            let h1 = tape.matmul(z, w1)?;
            let h1 = tape.add_row(h1, b1)?;
            let mut act = tape.split_relu(h1)?;
            if let Some(r) = rng.as_deref_mut() {
                if p_drop > 0.0 {
                    let m = dropout_mask(tape.value(act).len(), p_drop, r);
                    act = tape.mask(act, m)?;
                }
            }
            let w2 = tape.param(&self.store, ids.w2);
            let b2 = tape.param(&self.store, ids.b2);
            let h2 = tape.matmul(act, w2)?;
            let h2 = tape.add_row(h2, b2)?;
            let res = tape.add(z, h2)?;
            z = self.layer_norm(tape, res, ids.ln2_gain, ids.ln2_bias)?;
            tape.set_label(z, format!("layer{l}.ln2"));
            attention.push(head_nodes);
        }

        let wr = tape.param(&self.store, self.recon);
        let recon = tape.matmul(z, wr)?;
        tape.set_label(recon, "recon_head");

        let features = match cfg.task {
            TaskKind::Classification { .. } => {
                let pooled = tape.mean_rows(z)?;
                tape.re_im_concat(pooled)?
            }
            TaskKind::Regression { .. } => {
                let n = tape.value(z).len();
                tape.reshape(z, 1, n)?
            }
        };
        let wt = tape.param(&self.store, self.task_w);
        let bt = tape.param(&self.store, self.task_b);
        let task = tape.matmul(features, wt)?;
        let task = tape.add_row(task, bt)?;
        tape.set_label(task, "task_head");

        Ok(ForwardNodes {
            input,
            z,
            recon,
            task,
            attention,
        })
    }

    /// Records the loss terms for one sample on top of a forward pass.
    pub fn losses(&self, tape: &mut Tape, fwd: &ForwardNodes, x: &ComplexMatrix, target: &Target) -> Result<LossNodes> {
        let recon = tape.mean_squared(fwd.recon, x)?;
        let task = match (&self.cfg.task, target) {
            (TaskKind::Classification { .. }, Target::Class(y)) => tape.cross_entropy(fwd.task, *y)?,
            (TaskKind::Regression { d_out, horizon }, Target::Sequence(y)) => {
                if y.shape() != (*horizon, *d_out) {
                    return Err(HoloError::Data(format!(
                        "target shape {:?}, expected ({horizon}, {d_out})",
                        y.shape()
                    )));
                }
                let flat = y.clone().reshape(1, y.len())?;
                tape.mean_squared(fwd.task, &flat)?
            }
            _ => return Err(HoloError::Data("target kind does not match task head".into())),
        };
        let phase = tape.phase_reg(fwd.z)?;
        let w = self.cfg.effective_weights();
        let total = tape.linear_comb(&[(recon, w.recon), (task, w.task), (phase, w.phase)])?;
        Ok(LossNodes {
            recon,
            task,
            phase,
            total,
        })
    }

    fn breakdown(&self, tape: &Tape, l: &LossNodes) -> LossBreakdown {
        LossBreakdown::new(
            tape.scalar(l.recon),
            tape.scalar(l.task),
            tape.scalar(l.phase),
            self.cfg.effective_weights(),
        )
    }

    /// Forward and backward for one sample; parameter gradients are scaled
    /// by `scale` and added to the store's buffers.
    pub fn accumulate_gradients(
        &mut self,
        x: &ComplexMatrix,
        target: &Target,
        rng: Option<&mut ChaCha8Rng>,
        scale: f64,
    ) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, x, rng)?;
        let l = self.losses(&mut tape, &fwd, x, target)?;
        let b = self.breakdown(&tape, &l);
        if !b.total.is_finite() {
            let culprit = tape.first_non_finite().unwrap_or_else(|| "loss".to_string());
            return Err(HoloError::NonFinite(culprit));
        }
        let grads = tape.backward(l.total)?;
        tape.accumulate_param_grads(&grads, &mut self.store, scale);
        Ok(b)
    }

    /// Evaluation-mode loss terms for one sample.
    pub fn evaluate_loss(&self, x: &ComplexMatrix, target: &Target) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, x, None)?;
        let l = self.losses(&mut tape, &fwd, x, target)?;
        Ok(self.breakdown(&tape, &l))
    }

    /// Encoder output and every attention trace, `[layer][head]` flattened in
    /// layer-major order.
    pub fn encode(&self, x: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<AttentionTrace>)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, x, None)?;
        let traces = fwd
            .attention
            .iter()
            .flatten()
            .map(|&id| tape.trace(id).cloned().expect("attention node"))
            .collect();
        Ok((tape.value(fwd.z).clone(), traces))
    }

    /// Evaluation-mode task output.
    pub fn predict(&self, x: &ComplexMatrix) -> Result<TaskOutput> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, x, None)?;
        let out = tape.value(fwd.task);
        Ok(match self.cfg.task {
            TaskKind::Classification { .. } => TaskOutput::Logits(out.data().iter().map(|z| z.re).collect()),
            TaskKind::Regression { d_out, horizon } => TaskOutput::Prediction(out.clone().reshape(horizon, d_out)?),
        })
    }

    /// Evaluation-mode input reconstruction.
    pub fn reconstruct(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, x, None)?;
        Ok(tape.value(fwd.recon).clone())
    }
}
