//! Named trainable parameters and their gradient slots.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{AutodiffError, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Optimizer group. The post encoder trains at its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Other,
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub group: ParamGroup,
    pub value: Matrix,
    /// `None` until a backward pass has touched this parameter.
    pub grad: Option<Matrix>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        group: ParamGroup,
        value: Matrix,
    ) -> Result<ParamId, AutodiffError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(AutodiffError::DuplicateParam(name));
        }
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: "param_init" });
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            group,
            value,
            grad: None,
        });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ParamId, AutodiffError> {
        self.id(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Parameters in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Adds `scale * grads` into the gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (&id, g) in &grads.params {
            let p = &mut self.params[id.0];
            match &mut p.grad {
                Some(existing) => existing.add_scaled(g, scale),
                None => p.grad = Some(g.scale(scale)),
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }
}

/// Result of one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) params: BTreeMap<ParamId, Matrix>,
    pub(crate) leaves: BTreeMap<usize, Matrix>,
    /// Number of tape nodes whose backward rule ran.
    pub visited: usize,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params.get(&id)
    }

    pub fn leaf(&self, var: super::Var) -> Option<&Matrix> {
        self.leaves.get(&var.0)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    /// Sums another gradient set into this one, in `ParamId` order.
    pub fn merge(&mut self, other: &Gradients) {
        for (&id, g) in &other.params {
            match self.params.get_mut(&id) {
                Some(existing) => existing.add_assign(g),
                None => {
                    self.params.insert(id, g.clone());
                }
            }
        }
    }
}
