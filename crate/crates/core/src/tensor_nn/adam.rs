use serde::{Deserialize, Serialize};

use super::mlp::{GradBuffer, MlpParams};
use crate::error::{MinfoError, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MinfoError::config("lr", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(MinfoError::config("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(MinfoError::config("beta2", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(MinfoError::config("adam_eps", "must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: GradBuffer,
    second: GradBuffer,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: GradBuffer::zeros_like(params),
            second: GradBuffer::zeros_like(params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. With `ascent` the parameters move along
/// `+grads` (maximization), otherwise along `-grads`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut MlpParams,
    grads: &GradBuffer,
    ascent: bool,
) -> Result<()> {
    if !grads.is_congruent(params) || !state.first.is_congruent(params) {
        return Err(MinfoError::shape("adam_step", "congruent buffers", "mismatch"));
    }
    if !grads.is_finite() {
        return Err(MinfoError::numeric("adam_step gradient"));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let sign = if ascent { 1.0 } else { -1.0 };

    let moments = state.first.values_mut().zip(state.second.values_mut());
    let targets = params
        .layers_mut()
        .iter_mut()
        .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()));
    for (((m, v), p), &g) in moments.zip(targets).zip(grads.values()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p += sign * lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
