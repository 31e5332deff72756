//! Trainable parameters and the named store that owns them.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// A trainable array with its gradient and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum_buf: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum_buf = Tensor::zeros(value.shape());
        Self {
            value,
            grad,
            momentum_buf,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Role of a stored array. Decides whether the optimizer touches it and
/// whether it counts towards the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    NormScale,
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    pub fn is_regularized(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub param: Parameter,
}

/// Ordered collection of named parameters. Registration order is the
/// iteration order everywhere, which keeps updates deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new array. Panics if the name is already taken.
    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry {
            name,
            kind,
            param: Parameter::new(value),
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].param.value
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.entries[id.0].param
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.entries[id.0].param
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|e| e.param.zero_grad());
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind.is_trainable())
            .map(|e| e.param.value.len())
            .sum()
    }

    /// Σ‖θ‖² over weight arrays; biases and normalization parameters excluded.
    pub fn l2_norm_sq(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.kind.is_regularized())
            .map(|e| e.param.value.sum_squares())
            .sum()
    }

    /// Adds the gradient of `lambda * Σ‖θ‖²` to every weight gradient.
    pub fn add_l2_grad(&mut self, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for e in self.entries.iter_mut().filter(|e| e.kind.is_regularized()) {
            let p = &mut e.param;
            for (g, v) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
                *g += 2.0 * lambda * v;
            }
        }
    }

    /// Copies values of every entry whose name and shape match in `other`.
    /// Returns the number of copied entries.
    pub fn copy_matching_from(&mut self, other: &ParamStore) -> usize {
        let mut copied = 0;
        for e in &mut self.entries {
            if let Some(id) = other.find(&e.name) {
                let src = other.value(id);
                if src.shape() == e.param.value.shape() {
                    e.param.value = src.clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}
