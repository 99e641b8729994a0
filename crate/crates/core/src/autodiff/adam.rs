//! Bias-corrected Adam with per-group learning rates.
//!
//! ```text
//! m = b1 * m + (1 - b1) * g
//! v = b2 * v + (1 - b2) * g^2
//! w -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! ```

use super::{AutodiffError, Matrix, ParamGroup, ParamStore, Parameter};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(shape: (usize, usize), lr: f64) -> Self {
        Self {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
            t: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            lr,
        }
    }
}

/// One update of `param` from its accumulated gradient. The gradient is
/// cleared afterwards.
pub fn adam_step(state: &mut AdamState, param: &mut Parameter) -> Result<(), AutodiffError> {
    let grad = param
        .grad
        .take()
        .ok_or_else(|| AutodiffError::MissingGrad(param.name.clone()))?;
    if grad.shape() != param.value.shape() || state.m.shape() != param.value.shape() {
        return Err(AutodiffError::Shape {
            op: "adam_step",
            left: param.value.shape(),
            right: grad.shape(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let values = param.value.data_mut();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over a whole [`ParamStore`], one state per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr_for: impl Fn(ParamGroup) -> f64) -> Self {
        let states = store
            .iter()
            .map(|(_, p)| AdamState::new(p.value.shape(), lr_for(p.group)))
            .collect();
        Self { states }
    }

    /// Steps every parameter that received a gradient; untouched parameters
    /// (unused by the current variant) keep their state and value.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), AutodiffError> {
        for (state, param) in self.states.iter_mut().zip(store.iter_mut()) {
            if param.grad.is_some() {
                adam_step(state, param)?;
            }
        }
        Ok(())
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }
}
