//! Adam with bias correction, and global-norm gradient clipping.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::net::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.00025, beta1: 0.9, beta2: 0.999, eps: 1e-5 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    /// Updates skipped because a gradient was not finite.
    pub skipped: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        Self { config, m: params.zeros_like(), v: params.zeros_like(), step: 0, skipped: 0 }
    }

    pub fn matches(&self, params: &ParamStore) -> bool {
        self.m.len() == params.len()
            && self.m.iter().zip(params.tensors()).all(|(m, t)| m.len() == t.data.len())
            && self.v.iter().zip(params.tensors()).all(|(v, t)| v.len() == t.data.len())
    }
}

/// Whether an Adam call moved the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    SkippedNonFinite,
}

/// One bias-corrected Adam update. A non-finite gradient leaves parameters
/// and moments untouched and bumps the skip counter.
pub fn adam_step(params: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState) -> Result<StepOutcome> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(invalid_input!("gradient or optimizer shapes do not match the parameters"));
    }
    for (g, t) in grads.iter().zip(params.tensors()) {
        if g.len() != t.data.len() {
            return Err(invalid_input!("gradient for {} has {} entries, expected {}", t.name, g.len(), t.data.len()));
        }
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        state.skipped += 1;
        return Ok(StepOutcome::SkippedNonFinite);
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - libm::pow(c.beta1, t as f64);
    let bias2 = 1.0 - libm::pow(c.beta2, t as f64);
    for (i, g) in grads.iter().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let data = params.data_mut(i);
        for k in 0..g.len() {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            data[k] -= c.lr * m_hat / (libm::sqrt(v_hat) + c.eps);
        }
    }
    Ok(StepOutcome::Applied)
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    libm::sqrt(grads.iter().flatten().map(|g| g * g).sum())
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}
