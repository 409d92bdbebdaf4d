//! Seeded synthetic datasets and the noise channels used for robustness
//! sweeps.
//!
//! Every generator is a pure function of its parameters and seed. Sample
//! `i` draws from its own generator seeded by mixing the dataset seed with
//! `i`, so any subset of samples can be regenerated independently.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::derive_seed;
use crate::ctensor::{magnitude, phasor, ComplexMatrix, C64};
use crate::error::{HoloError, Result};
use crate::model::Target;

/// Phase jitter and amplitude noise levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Phase-jitter standard deviation in radians.
    pub sigma: f64,
    /// Relative amplitude-noise standard deviation.
    pub tau: f64,
    pub seed: u64,
    /// One jitter draw per token (row) instead of per entry.
    #[serde(default)]
    pub per_token: bool,
    /// Additive complex noise of std `tau·|x|` instead of the multiplicative
    /// real factor.
    #[serde(default)]
    pub additive: bool,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.tau >= 0.0) || !self.sigma.is_finite() || !self.tau.is_finite() {
            return Err(HoloError::Config(format!(
                "noise levels must be finite and ≥ 0 (sigma {}, tau {})",
                self.sigma, self.tau
            )));
        }
        Ok(())
    }

    /// Applies jitter then amplitude noise to one sample. `index` selects
    /// an independent stream so every sample gets its own draws.
    pub fn apply(&self, x: &ComplexMatrix, index: u64) -> Result<ComplexMatrix> {
        self.validate()?;
        let base = derive_seed(self.seed, index);
        let jittered = if self.per_token {
            apply_phase_jitter_per_token(x, self.sigma, derive_seed(base, 0))
        } else {
            apply_phase_jitter(x, self.sigma, derive_seed(base, 0))
        };
        Ok(if self.additive {
            apply_additive_noise(&jittered, self.tau, derive_seed(base, 1))
        } else {
            apply_amplitude_noise(&jittered, self.tau, derive_seed(base, 1))
        })
    }
}

/// Generator settings recorded in a dataset's metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorParams {
    PhaseClassification(PhaseClassParams),
    PhasorPrediction(PhasorParams),
    /// Data produced outside this crate.
    External { description: String },
}

/// Settings of [`gen_phase_classification_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseClassParams {
    pub seq_len: usize,
    pub d: usize,
    pub num_classes: usize,
    /// Std of the circular complex noise added to every entry
    /// (`E|n|² = noise_std²`).
    pub noise_std: f64,
    pub carrier: Carrier,
    /// Probability that a token is clutter: random phase on every entry and
    /// no class pattern.
    pub clutter_prob: f64,
    /// Amplitude multiplier of component 0, which carries the carrier phase
    /// for every class and so acts as a phase reference.
    pub pilot_gain: f64,
}

impl PhaseClassParams {
    pub fn new(seq_len: usize, d: usize, num_classes: usize) -> Self {
        Self {
            seq_len,
            d,
            num_classes,
            noise_std: 0.5,
            carrier: Carrier::Drift {
                max_rate: std::f64::consts::PI,
            },
            clutter_prob: 0.0,
            pilot_gain: 1.0,
        }
    }
}

impl Default for PhaseClassParams {
    fn default() -> Self {
        Self::new(16, 4, 4)
    }
}

/// How the carrier phase of the signal tokens evolves along a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Carrier {
    /// One random phase for the whole sequence.
    Fixed,
    /// Random start phase advancing by a random rate in `±max_rate` radians
    /// per token.
    Drift { max_rate: f64 },
    /// A fresh random phase for every token.
    Independent,
}

/// Settings of [`gen_phasor_prediction_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasorParams {
    pub t_in: usize,
    pub t_out: usize,
    pub d: usize,
    pub n_phasors: usize,
    /// Largest Doppler frequency in radians per step at speed 1.
    pub doppler_range: f64,
    /// Multiplies `doppler_range` (e.g. 1, 10, 40 for 3, 30, 120 km/h).
    pub speed: f64,
}

impl PhasorParams {
    pub fn new(d: usize, n_phasors: usize, doppler_range: f64) -> Self {
        Self {
            t_in: 12,
            t_out: 12,
            d,
            n_phasors,
            doppler_range,
            speed: 1.0,
        }
    }

    pub fn max_frequency(&self) -> f64 {
        self.doppler_range * self.speed
    }
}

impl Default for PhasorParams {
    fn default() -> Self {
        Self::new(4, 1, 0.05)
    }
}

/// Identifying information stored with a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    /// `"classification"` or `"regression"`.
    pub task: String,
    pub n: usize,
    pub seq_len: usize,
    pub d: usize,
    pub seed: u64,
    pub params: GeneratorParams,
}

/// Inputs, targets and provenance of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<ComplexMatrix>,
    pub targets: Vec<Target>,
    pub meta: DatasetMeta,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

fn circular_normal(rng: &mut ChaCha8Rng, std: f64) -> C64 {
    let s = std / std::f64::consts::SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Rayleigh draw with scale 1, so `E[A²] = 2`.
fn rayleigh(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    (-2.0 * (1.0 - u).ln()).sqrt()
}

fn uniform_phase(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
}

/// Phase-classification data with default noise settings.
pub fn gen_phase_classification(n: usize, seq_len: usize, d: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    gen_phase_classification_with(n, &PhaseClassParams::new(seq_len, d, num_classes), seed)
}

/// Class `k` places component `c` of every signal token at phase offset
/// `2πk·c/K` relative to the token's carrier phase. Token amplitudes are
/// i.i.d. Rayleigh for all classes and the noise is circular, so the
/// magnitudes `|x_t,c|` have the same distribution for every class. Labels
/// cycle through the classes, so any prefix is nearly balanced.
pub fn gen_phase_classification_with(n: usize, p: &PhaseClassParams, seed: u64) -> Result<Dataset> {
    if p.num_classes < 2 {
        return Err(HoloError::Config(format!("need at least 2 classes, got {}", p.num_classes)));
    }
    if p.seq_len == 0 || p.d == 0 {
        return Err(HoloError::Config("seq_len and d must be positive".into()));
    }
    if !(p.noise_std >= 0.0) || !(0.0..=1.0).contains(&p.clutter_prob) || !(p.pilot_gain >= 0.0) {
        return Err(HoloError::Config(
            "noise_std and pilot_gain must be ≥ 0 and clutter_prob in [0, 1]".into(),
        ));
    }
    let k_count = p.num_classes as f64;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % p.num_classes;
        let mut rng = sample_rng(seed, i as u64);
        let step = 2.0 * std::f64::consts::PI * label as f64 / k_count;
        let pattern: Vec<C64> = (0..p.d).map(|c| phasor(step * c as f64)).collect();
        let start = uniform_phase(&mut rng);
        let rate = match p.carrier {
            Carrier::Drift { max_rate } if max_rate > 0.0 => rng.random_range(-max_rate..=max_rate),
            _ => 0.0,
        };
        let mut data = Vec::with_capacity(p.seq_len * p.d);
        for t in 0..p.seq_len {
            let carrier = match p.carrier {
                Carrier::Independent => uniform_phase(&mut rng),
                _ => start + rate * t as f64,
            };
            let amp = rayleigh(&mut rng);
            let clutter = p.clutter_prob > 0.0 && rng.random::<f64>() < p.clutter_prob;
            let base = phasor(carrier) * amp;
            for (c, pat) in pattern.iter().enumerate() {
                let gain = if c == 0 { p.pilot_gain } else { 1.0 };
                let clean = if clutter { phasor(uniform_phase(&mut rng)) * amp } else { base * pat * gain };
                data.push(clean + circular_normal(&mut rng, p.noise_std));
            }
        }
        inputs.push(ComplexMatrix::new(p.seq_len, p.d, data)?);
        targets.push(Target::Class(label));
    }
    Ok(Dataset {
        inputs,
        targets,
        meta: DatasetMeta {
            task: "classification".into(),
            n,
            seq_len: p.seq_len,
            d: p.d,
            seed,
            params: GeneratorParams::PhaseClassification(p.clone()),
        },
    })
}

/// Sum-of-phasors forecasting data with the default 12→12 horizon.
pub fn gen_phasor_prediction(n: usize, d: usize, n_phasors: usize, doppler_range: f64, seed: u64) -> Result<Dataset> {
    gen_phasor_prediction_with(n, &PhasorParams::new(d, n_phasors, doppler_range), seed)
}

/// `x_t,c = Σ_m A_m,c · exp(j(ω_m t + φ_m,c))` over `t_in + t_out` steps;
/// the first `t_in` rows are the input and the rest the target. Frequencies
/// are shared by all components of a sample and drawn uniformly from
/// `±doppler_range·speed`; amplitudes are Rayleigh scaled so that
/// `Σ_m E[A_m²] = 1`.
pub fn gen_phasor_prediction_with(n: usize, p: &PhasorParams, seed: u64) -> Result<Dataset> {
    if p.t_in == 0 || p.t_out == 0 || p.d == 0 || p.n_phasors == 0 {
        return Err(HoloError::Config("t_in, t_out, d and n_phasors must be positive".into()));
    }
    if !(p.doppler_range >= 0.0 && p.speed >= 0.0) {
        return Err(HoloError::Config("doppler_range and speed must be ≥ 0".into()));
    }
    let w_max = p.max_frequency();
    let amp_scale = (0.5 / p.n_phasors as f64).sqrt();
    let total = p.t_in + p.t_out;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = sample_rng(seed, i as u64);
        let mut comps = Vec::with_capacity(p.n_phasors);
        for _ in 0..p.n_phasors {
            let w = if w_max > 0.0 { rng.random_range(-w_max..=w_max) } else { 0.0 };
            let per_c: Vec<(f64, f64)> = (0..p.d)
                .map(|_| (amp_scale * rayleigh(&mut rng), uniform_phase(&mut rng)))
                .collect();
            comps.push(Phasor { omega: w, terms: per_c });
        }
        let full = ComplexMatrix::from_fn(total, p.d, |t, c| {
            comps.iter().map(|m| m.value(t as f64, c)).sum::<C64>()
        });
        inputs.push(full.slice_rows(0, p.t_in));
        targets.push(Target::Sequence(full.slice_rows(p.t_in, p.t_out)));
    }
    Ok(Dataset {
        inputs,
        targets,
        meta: DatasetMeta {
            task: "regression".into(),
            n,
            seq_len: p.t_in,
            d: p.d,
            seed,
            params: GeneratorParams::PhasorPrediction(p.clone()),
        },
    })
}

struct Phasor {
    omega: f64,
    /// `(A, φ)` per component.
    terms: Vec<(f64, f64)>,
}

impl Phasor {
    fn value(&self, t: f64, c: usize) -> C64 {
        let (a, phi) = self.terms[c];
        phasor(self.omega * t + phi) * a
    }
}

/// Continues a single noiseless phasor per component from its last two
/// observations: `x_{T-1+h} = x_{T-1} · (x_{T-1} / x_{T-2})^h`. Exact for
/// single-phasor sequences whose entries are nonzero.
pub fn phasor_extrapolate(x: &ComplexMatrix, horizon: usize) -> Result<ComplexMatrix> {
    if x.rows() < 2 {
        return Err(HoloError::Data("need at least two observed steps".into()));
    }
    let last = x.rows() - 1;
    let mut out = ComplexMatrix::zeros(horizon, x.cols());
    for c in 0..x.cols() {
        let a = x.get(last, c);
        let b = x.get(last - 1, c);
        let ratio = if magnitude(b) > 0.0 { a / b } else { C64::new(1.0, 0.0) };
        // Use the ratio's phase only; amplitude is constant for a phasor.
        let w = ratio.arg();
        for h in 0..horizon {
            out.set(h, c, a * phasor(w * (h + 1) as f64));
        }
    }
    Ok(out)
}

/// Rotates `z` by `eta` and nudges the result by a few ulps so that its
/// modulus is bit-identical to `|z|`.
pub fn rotate_preserving_magnitude(z: C64, eta: f64) -> C64 {
    let target = magnitude(z);
    let w = z * phasor(eta);
    if magnitude(w) == target || !target.is_finite() {
        return w;
    }
    let offset = |x: f64, k: i64| -> f64 {
        if x == 0.0 {
            return x;
        }
        // Adding to the bit pattern moves |x| by whole ulps for either sign.
        f64::from_bits((x.to_bits() as i64 + k) as u64)
    };
    let mut best: Option<(i64, C64)> = None;
    for dr in -3i64..=3 {
        for di in -3i64..=3 {
            let cand = C64::new(offset(w.re, dr), offset(w.im, di));
            let cost = dr.abs() + di.abs();
            if magnitude(cand) == target && best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, cand));
            }
        }
    }
    best.map_or(w, |(_, c)| c)
}

/// `x' = x · exp(jη)` with `η ~ N(0, σ²)` i.i.d. per entry. Moduli are
/// preserved bit-for-bit; `sigma = 0` returns `x` unchanged.
pub fn apply_phase_jitter(x: &ComplexMatrix, sigma: f64, seed: u64) -> ComplexMatrix {
    if sigma == 0.0 {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sigma).expect("sigma ≥ 0");
    x.map(|z| rotate_preserving_magnitude(z, dist.sample(&mut rng)))
}

/// Jitter with one draw shared by all entries of a row.
pub fn apply_phase_jitter_per_token(x: &ComplexMatrix, sigma: f64, seed: u64) -> ComplexMatrix {
    if sigma == 0.0 {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, sigma).expect("sigma ≥ 0");
    let etas: Vec<f64> = (0..x.rows()).map(|_| dist.sample(&mut rng)).collect();
    ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| rotate_preserving_magnitude(x.get(i, j), etas[i]))
}

/// `x' = x · (1 + ε)` with real `ε ~ N(0, τ²)` i.i.d. per entry.
pub fn apply_amplitude_noise(x: &ComplexMatrix, tau: f64, seed: u64) -> ComplexMatrix {
    if tau == 0.0 {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, tau).expect("tau ≥ 0");
    x.map(|z| z * (1.0 + dist.sample(&mut rng)))
}

/// `x' = x + τ|x|·n` with `n` circular complex normal of unit power.
pub fn apply_additive_noise(x: &ComplexMatrix, tau: f64, seed: u64) -> ComplexMatrix {
    if tau == 0.0 {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.map(|z| z + circular_normal(&mut rng, tau * magnitude(z)))
}

const MAGIC: &[u8; 8] = b"HOLODATA";
const VERSION: u32 = 1;

fn put_matrix(out: &mut Vec<u8>, m: &ComplexMatrix) {
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for z in m.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| HoloError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| HoloError::Format(format!("implausible length {n}")))
    }

    fn matrix(&mut self) -> Result<ComplexMatrix> {
        let rows = self.len()?;
        let cols = self.len()?;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(16) <= self.buf.len())
            .ok_or_else(|| HoloError::Format("matrix too large".into()))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let re = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
            data.push(C64::new(re, im));
        }
        ComplexMatrix::new(rows, cols, data)
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Checks counts, shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(HoloError::Data(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        for (i, (x, t)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if x.shape() != (self.meta.seq_len, self.meta.d) {
                return Err(HoloError::Data(format!("sample {i} has shape {:?}", x.shape())));
            }
            let finite = x.is_finite()
                && match t {
                    Target::Sequence(y) => y.is_finite(),
                    Target::Class(_) => true,
                };
            if !finite {
                return Err(HoloError::Data(format!("sample {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Samples `[start, start + len)` as a new dataset.
    pub fn slice(&self, start: usize, len: usize) -> Dataset {
        let end = (start + len).min(self.len());
        let start = start.min(end);
        Dataset {
            inputs: self.inputs[start..end].to_vec(),
            targets: self.targets[start..end].to_vec(),
            meta: DatasetMeta {
                n: end - start,
                ..self.meta.clone()
            },
        }
    }

    /// First `round(train_fraction·n)` samples for training, the rest for
    /// testing.
    pub fn split(&self, train_fraction: f64) -> (Dataset, Dataset) {
        let cut = ((self.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
        (self.slice(0, cut), self.slice(cut, self.len() - cut))
    }

    /// Every input passed through `noise`, sample `i` using stream `i`.
    pub fn with_noise(&self, noise: &NoiseSpec) -> Result<Dataset> {
        let inputs = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, x)| noise.apply(x, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            inputs,
            ..self.clone()
        })
    }

    /// Serializes to the binary container: `b"HOLODATA"`, `u32` version,
    /// `u64` length + JSON metadata, then per sample the input matrix and a
    /// target (`u8` tag 0 + `u64` class, or tag 1 + matrix). Matrices are
    /// `u64` rows, `u64` cols and little-endian `(re, im)` `f64` pairs.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| HoloError::Format(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            put_matrix(&mut out, x);
            match t {
                Target::Class(k) => {
                    out.push(0);
                    out.extend_from_slice(&(*k as u64).to_le_bytes());
                }
                Target::Sequence(y) => {
                    out.push(1);
                    put_matrix(&mut out, y);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(HoloError::Format("not a dataset container (bad magic)".into()));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(HoloError::Format(format!("unsupported dataset version {version}")));
        }
        let meta_len = c.len()?;
        let meta: DatasetMeta =
            serde_json::from_slice(c.take(meta_len)?).map_err(|e| HoloError::Format(format!("metadata: {e}")))?;
        let n = c.len()?;
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            inputs.push(c.matrix()?);
            targets.push(match c.u8()? {
                0 => Target::Class(c.u64()? as usize),
                1 => Target::Sequence(c.matrix()?),
                tag => return Err(HoloError::Format(format!("unknown target tag {tag}"))),
            });
        }
        if c.pos != bytes.len() {
            return Err(HoloError::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
        }
        if meta.n != n {
            return Err(HoloError::Format(format!("header says {} samples, found {n}", meta.n)));
        }
        let ds = Dataset { inputs, targets, meta };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Loads a container, including ones written by other tools.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }

    /// Plain-text export with columns `sample,part,row,col,re,im`, where
    /// `part` is `input`, `target`, or `label` (class index in `re`).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,part,row,col,re,im\n");
        let emit = |s: &mut String, i: usize, part: &str, m: &ComplexMatrix| {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    let z = m.get(r, c);
                    let _ = writeln!(s, "{i},{part},{r},{c},{:e},{:e}", z.re, z.im);
                }
            }
        };
        for (i, (x, t)) in self.inputs.iter().zip(&self.targets).enumerate() {
            emit(&mut s, i, "input", x);
            match t {
                Target::Class(k) => {
                    let _ = writeln!(s, "{i},label,0,0,{k},0");
                }
                Target::Sequence(y) => emit(&mut s, i, "target", y),
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctensor::angle;
    use std::f64::consts::PI;

    #[test]
    fn classification_is_seed_deterministic() {
        let a = gen_phase_classification(20, 8, 4, 4, 5).unwrap();
        let b = gen_phase_classification(20, 8, 4, 4, 5).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        let c = gen_phase_classification(20, 8, 4, 4, 6).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn samples_regenerate_independently() {
        let all = gen_phase_classification(10, 6, 3, 2, 9).unwrap();
        let first = gen_phase_classification(4, 6, 3, 2, 9).unwrap();
        assert_eq!(&all.inputs[..4], &first.inputs[..]);
    }

    #[test]
    fn classification_rejects_single_class() {
        assert!(matches!(gen_phase_classification(4, 4, 4, 1, 0), Err(HoloError::Config(_))));
    }

    #[test]
    fn noiseless_pattern_encodes_class() {
        let p = PhaseClassParams {
            noise_std: 0.0,
            ..PhaseClassParams::new(5, 4, 4)
        };
        let ds = gen_phase_classification_with(8, &p, 1).unwrap();
        for (x, t) in ds.inputs.iter().zip(&ds.targets) {
            let Target::Class(k) = t else { unreachable!() };
            let step = 2.0 * PI * *k as f64 / 4.0;
            for r in 0..5 {
                for c in 1..4 {
                    let rel = angle(x.get(r, c) * x.get(r, 0).conj());
                    let want = crate::ctensor::wrap_angle(step * c as f64);
                    let diff = crate::ctensor::wrap_angle(rel - want).abs();
                    assert!(diff < 1e-9, "class {k} comp {c}: {rel} vs {want}");
                }
            }
        }
    }

    #[test]
    fn single_static_phasor_is_constant() {
        let p = PhasorParams::new(2, 1, 0.0);
        let ds = gen_phasor_prediction_with(3, &p, 4).unwrap();
        for (x, t) in ds.inputs.iter().zip(&ds.targets) {
            let Target::Sequence(y) = t else { unreachable!() };
            for c in 0..2 {
                let last = x.get(11, c);
                for r in 0..12 {
                    assert!((x.get(r, c) - last).norm() < 1e-15);
                    assert!((y.get(r, c) - last).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_phasor_continuation_matches_closed_form() {
        let p = PhasorParams::new(3, 1, 0.3);
        let ds = gen_phasor_prediction_with(20, &p, 8).unwrap();
        for (x, t) in ds.inputs.iter().zip(&ds.targets) {
            let Target::Sequence(y) = t else { unreachable!() };
            let pred = phasor_extrapolate(x, 12).unwrap();
            assert!(pred.sub(y).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn jitter_zero_is_identity_and_preserves_moduli() {
        let ds = gen_phase_classification(3, 6, 4, 4, 2).unwrap();
        let x = &ds.inputs[0];
        assert_eq!(&apply_phase_jitter(x, 0.0, 1), x);
        for sigma in [0.1, 0.4, 3.0] {
            let y = apply_phase_jitter(x, sigma, 7);
            for (a, b) in x.data().iter().zip(y.data()) {
                assert_eq!(magnitude(*a).to_bits(), magnitude(*b).to_bits());
            }
        }
    }

    #[test]
    fn amplitude_noise_zero_is_identity_and_keeps_phase() {
        let ds = gen_phase_classification(2, 6, 4, 4, 2).unwrap();
        let x = &ds.inputs[1];
        assert_eq!(&apply_amplitude_noise(x, 0.0, 1), x);
        let y = apply_amplitude_noise(x, 0.3, 3);
        for (a, b) in x.data().iter().zip(y.data()) {
            let factor = b.re / a.re;
            if factor > 0.0 {
                assert!((angle(*a) - angle(*b)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn per_token_jitter_shares_rows() {
        let x = ComplexMatrix::from_fn(3, 4, |i, j| C64::new(1.0 + i as f64, j as f64 - 1.5));
        let y = apply_phase_jitter_per_token(&x, 0.5, 11);
        for r in 0..3 {
            let d0 = angle(y.get(r, 0) * x.get(r, 0).conj());
            for c in 1..4 {
                let d = angle(y.get(r, c) * x.get(r, c).conj());
                assert!((d - d0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn container_round_trip_and_csv() {
        for ds in [
            gen_phase_classification(5, 4, 3, 2, 1).unwrap(),
            gen_phasor_prediction(4, 2, 2, 0.1, 1).unwrap(),
        ] {
            let bytes = ds.to_bytes().unwrap();
            let back = Dataset::from_bytes(&bytes).unwrap();
            assert_eq!(back, ds);
            let csv = ds.to_csv();
            assert!(csv.starts_with("sample,part,row,col,re,im\n"));
            let rows_per = ds.meta.seq_len * ds.meta.d;
            assert!(csv.lines().count() > rows_per * ds.len());
            assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn noise_spec_rejects_negative() {
        let n = NoiseSpec {
            sigma: -0.1,
            tau: 0.0,
            seed: 0,
            per_token: false,
            additive: false,
        };
        assert!(n.validate().is_err());
    }

    #[test]
    fn split_partitions() {
        let ds = gen_phase_classification(10, 4, 2, 2, 1).unwrap();
        let (a, b) = ds.split(0.8);
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(a.meta.n, 8);
        assert_eq!(b.inputs[0], ds.inputs[8]);
    }
}
