//! Rollout storage and generalized advantage estimation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One agent step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T: Scalar = f32> {
    /// Network input the action was chosen on.
    pub input: Vec<T>,
    /// Raw Gaussian draw (before clamping).
    pub action: T,
    pub logp: T,
    pub sigma: T,
    pub reward: T,
    pub value: T,
    /// The episode ended with this transition.
    pub done: bool,
    /// Filled by [`compute_advantages`].
    pub advantage: T,
    /// Filled by [`compute_advantages`].
    pub ret: T,
}

impl<T: Scalar> Transition<T> {
    pub fn new(input: Vec<T>, action: T, logp: T, sigma: T, reward: T, value: T, done: bool) -> Self {
        Self { input, action, logp, sigma, reward, value, done, advantage: T::zero(), ret: T::zero() }
    }
}

/// Transitions in time order plus the value of the state after the last one
/// (ignored when that transition ended its episode).
#[derive(Debug, Clone, Default)]
pub struct Rollout<T: Scalar = f32> {
    pub transitions: Vec<Transition<T>>,
    pub bootstrap_value: T,
}

impl<T: Scalar> Rollout<T> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// GAE(gamma, lambda): fills raw advantages and `returns = advantages + values`.
pub fn compute_advantages<T: Scalar>(rollout: &mut Rollout<T>, gamma: T, lambda: T) -> Result<()> {
    if rollout.is_empty() {
        return Err(Error::Contract("advantage estimation on an empty rollout".into()));
    }
    let mut next_value = rollout.bootstrap_value;
    let mut carry = T::zero();
    for tr in rollout.transitions.iter_mut().rev() {
        let live = if tr.done { T::zero() } else { T::one() };
        let delta = tr.reward + gamma * next_value * live - tr.value;
        carry = delta + gamma * lambda * live * carry;
        tr.advantage = carry;
        tr.ret = carry + tr.value;
        next_value = tr.value;
    }
    Ok(())
}

/// Shifts and scales advantages to zero mean and unit variance. Batches of
/// one or with zero spread are only centred.
pub fn normalize_advantages<T: Scalar>(transitions: &mut [Transition<T>]) {
    let n = transitions.len();
    if n == 0 {
        return;
    }
    let nt = T::lit(n as f64);
    let mean = transitions.iter().map(|t| t.advantage).sum::<T>() / nt;
    let var = transitions.iter().map(|t| (t.advantage - mean).powi(2)).sum::<T>() / nt;
    let std = var.sqrt();
    let eps = T::lit(1e-8);
    for t in transitions {
        t.advantage = if std > eps { (t.advantage - mean) / (std + eps) } else { t.advantage - mean };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(reward: f64, value: f64, done: bool) -> Transition<f64> {
        Transition::new(vec![], 0.0, 0.0, 0.1, reward, value, done)
    }

    #[test]
    fn single_terminal_step() {
        let mut r = Rollout { transitions: vec![tr(-50.0, 0.0, true)], bootstrap_value: 123.0 };
        compute_advantages(&mut r, 0.999, 0.95).unwrap();
        assert_eq!(r.transitions[0].advantage, -50.0);
        assert_eq!(r.transitions[0].ret, -50.0);
    }

    #[test]
    fn empty_rollout_is_rejected() {
        let mut r = Rollout::<f64>::default();
        assert!(compute_advantages(&mut r, 0.99, 0.95).is_err());
    }

    #[test]
    fn normalization() {
        let mut ts: Vec<_> = [1.0, 2.0, 3.0, 6.0].iter().map(|a| Transition { advantage: *a, ..tr(0.0, 0.0, false) }).collect();
        normalize_advantages(&mut ts);
        let mean: f64 = ts.iter().map(|t| t.advantage).sum::<f64>() / 4.0;
        let var: f64 = ts.iter().map(|t| t.advantage.powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
    }
}
