use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ctensor::{ComplexMatrix, C64};
use crate::error::{HoloError, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// One named parameter tensor with its gradient buffer and Adam moments.
///
/// Moments are stored per real component, interleaved `(re, im)`.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: ComplexMatrix,
    pub grad: ComplexMatrix,
    /// Real-valued parameters keep their imaginary part pinned at zero.
    pub real_only: bool,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl Param {
    /// Number of trainable real components.
    pub fn real_len(&self) -> usize {
        if self.real_only {
            self.value.len()
        } else {
            2 * self.value.len()
        }
    }
}

/// Named parameter tensors plus optimizer state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ComplexMatrix, real_only: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(HoloError::Config(format!("duplicate parameter `{name}`")));
        }
        let value = if real_only {
            value.map(|z| C64::new(z.re, 0.0))
        } else {
            value
        };
        let n = value.len();
        let id = ParamId(self.params.len());
        self.params.push(Param {
            grad: ComplexMatrix::zeros(value.rows(), value.cols()),
            name: name.clone(),
            value,
            real_only,
            m: vec![0.0; 2 * n],
            v: vec![0.0; 2 * n],
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &ComplexMatrix {
        &self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = C64::new(0.0, 0.0);
            }
        }
    }

    /// Total trainable real components.
    pub fn real_len(&self) -> usize {
        self.params.iter().map(Param::real_len).sum()
    }

    /// Multiplies every gradient by `s`.
    pub fn scale_grads(&mut self, s: f64) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g *= s;
            }
        }
    }

    /// Name of the first parameter or gradient holding a NaN/Inf.
    pub fn first_non_finite(&self) -> Option<String> {
        for p in &self.params {
            if !p.value.is_finite() {
                return Some(p.name.clone());
            }
            if !p.grad.is_finite() {
                return Some(format!("{}.grad", p.name));
            }
        }
        None
    }

    /// Reads real component `idx` of parameter `id` (`2k` = re, `2k+1` = im).
    pub fn component(&self, id: ParamId, idx: usize) -> f64 {
        let z = self.params[id.0].value.data()[idx / 2];
        if idx % 2 == 0 {
            z.re
        } else {
            z.im
        }
    }

    pub fn set_component(&mut self, id: ParamId, idx: usize, x: f64) {
        let z = &mut self.params[id.0].value.data_mut()[idx / 2];
        if idx % 2 == 0 {
            z.re = x;
        } else {
            z.im = x;
        }
    }

    pub fn grad_component(&self, id: ParamId, idx: usize) -> f64 {
        let z = self.params[id.0].grad.data()[idx / 2];
        if idx % 2 == 0 {
            z.re
        } else {
            z.im
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }
}
