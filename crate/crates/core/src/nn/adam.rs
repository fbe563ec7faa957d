use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GradBuffer, Net, NnError, Params};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update (`p -= lr/(1-b1^t) * m / (sqrt(v)/sqrt(1-b2^t) + eps)`).
pub fn adam_step(params: &mut Params, grads: &GradBuffer, state: &mut AdamState, cfg: &AdamConfig) -> Result<(), NnError> {
    let n = params.data.len();
    if grads.data.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(NnError::shape(
            "adam",
            alloc::format!("{} params, {} grads, {} moments", n, grads.data.len(), state.m.len()),
        ));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = math::sqrt(1.0 - libm::pow(cfg.beta2, t));
    let step_size = cfg.lr / bc1;
    for i in 0..n {
        let g = grads.data[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let denom = math::sqrt(state.v[i]) / bc2 + cfg.eps;
        params.data[i] -= step_size * state.m[i] / denom;
    }
    Ok(())
}

impl Net {
    /// Applies [`adam_step`] and advances the parameter generation.
    pub fn adam_step(&mut self, grads: &GradBuffer, state: &mut AdamState, cfg: &AdamConfig) -> Result<(), NnError> {
        if self.num_params() == 0 {
            return Ok(());
        }
        adam_step(self.params_for_update(), grads, state, cfg)
    }
}
