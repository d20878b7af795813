//! Time-decayed progress reward with terminal bonus and penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{EpisodeStatus, StatusKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams<T = f64> {
    /// Time-independent weight of the momentary speed.
    pub beta: T,
    /// Weight of the linearly decaying time component.
    pub beta_tilde: T,
    /// Penalty magnitude on failure.
    pub alpha: T,
    /// Bonus on finishing.
    pub alpha_tilde: T,
    pub t_max: u32,
}

impl<T: Scalar> Default for RewardParams<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(3.0),
            beta_tilde: T::lit(2.0),
            alpha: T::lit(50.0),
            alpha_tilde: T::lit(100.0),
            t_max: 7500,
        }
    }
}

impl<T: Scalar> RewardParams<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        if !(self.beta > zero && self.beta_tilde > zero && self.alpha > zero && self.alpha_tilde > zero) {
            return Err(Error::Config("reward constants must be strictly positive".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("reward t_max must be > 0".into()));
        }
        Ok(())
    }

    /// Weight applied to the momentary speed at step `t`.
    pub fn step_weight(&self, t: u32) -> T {
        let frac = T::lit(f64::from(t)) / T::lit(f64::from(self.t_max));
        self.beta + self.beta_tilde * (T::one() - frac)
    }
}

/// Progress toward the end point during one step (1-D distances).
pub fn momentary_speed<T: Scalar>(loc_prev: T, loc_now: T, loc_final: T) -> T {
    (loc_final - loc_prev).abs() - (loc_final - loc_now).abs()
}

/// Per-step reward. A terminal status replaces the shaped term.
pub fn compute_reward<T: Scalar>(t: u32, v_mom: T, status: &EpisodeStatus, params: &RewardParams<T>) -> T {
    match status.kind {
        StatusKind::Finished => params.alpha_tilde,
        StatusKind::Collided | StatusKind::Timeout | StatusKind::Stalled => -params.alpha,
        StatusKind::Running => params.step_weight(t) * v_mom,
    }
}

/// Undiscounted sum used for episode analysis and checkpoint ranking.
pub fn cumulative_reward<T: Scalar>(rewards: &[T]) -> T {
    rewards.iter().copied().sum()
}
