use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Learner settings. Exploration `sigma` follows an external step schedule
/// and is not learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyperParams {
    pub gamma: f64,
    pub clip_eps: f64,
    pub learning_rate: f64,
    pub value_loss_scale: f64,
    pub entropy_scale: f64,
    pub sigma_init: f64,
    pub sigma_decrement: f64,
    pub sigma_interval_steps: u64,
    pub sigma_floor: f64,
    pub rollout_length: usize,
    pub minibatch_size: usize,
    pub epochs_per_update: usize,
    pub gae_lambda: f64,
    pub hidden_width: usize,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm clip; `0` disables clipping.
    pub max_grad_norm: f64,
    /// Factor applied to rewards before advantage estimation. Logged and
    /// reported rewards are never scaled.
    pub reward_scale: f64,
}

impl Default for PpoHyperParams {
    fn default() -> Self {
        Self {
            gamma: 0.999,
            clip_eps: 0.2,
            learning_rate: 1e-4,
            value_loss_scale: 0.5,
            entropy_scale: 0.01,
            sigma_init: 0.1,
            sigma_decrement: 0.025,
            sigma_interval_steps: 500_000,
            sigma_floor: 0.0,
            rollout_length: 2048,
            minibatch_size: 256,
            epochs_per_update: 4,
            gae_lambda: 0.95,
            hidden_width: 256,
            optimizer: OptimizerKind::Adam,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
        }
    }
}

impl PpoHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0,1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0,1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0,1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.sigma_init < 0.0 || self.sigma_floor < 0.0 || self.sigma_decrement < 0.0 {
            return bad("sigma settings must be non-negative");
        }
        if self.sigma_interval_steps == 0 {
            return bad("sigma_interval_steps must be > 0");
        }
        if self.rollout_length == 0 || self.minibatch_size == 0 || self.epochs_per_update == 0 || self.hidden_width == 0 {
            return bad("rollout_length, minibatch_size, epochs_per_update and hidden_width must be > 0");
        }
        if self.value_loss_scale < 0.0 || self.entropy_scale < 0.0 || self.max_grad_norm < 0.0 || !(self.reward_scale > 0.0) {
            return bad("loss scales must be non-negative and reward_scale positive");
        }
        Ok(())
    }
}

/// Exploration scale after `global_step` environment steps: stepwise linear
/// decay, floored.
pub fn sigma_schedule(global_step: u64, h: &PpoHyperParams) -> f64 {
    let decrements = (global_step / h.sigma_interval_steps) as f64;
    let sigma = h.sigma_init - h.sigma_decrement * decrements;
    // absorb rounding residue so the floor is hit exactly
    if sigma <= h.sigma_floor + 1e-12 {
        h.sigma_floor
    } else {
        sigma
    }
}
