//! Clipped surrogate objective with value and entropy terms, and its
//! analytic gradient.

use ndarray::{Array1, Array2};

use super::gaussian::{entropy, log_prob};
use super::gae::Transition;
use super::net::PolicyNet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minibatch in array form.
#[derive(Debug, Clone)]
pub struct Batch<T: Scalar> {
    pub inputs: Array2<T>,
    pub actions: Array1<T>,
    pub logp_old: Array1<T>,
    pub sigma: Array1<T>,
    pub advantages: Array1<T>,
    pub returns: Array1<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn gather(transitions: &[Transition<T>], indices: &[usize]) -> Result<Self> {
        let first = indices
            .first()
            .ok_or_else(|| Error::Contract("empty minibatch".into()))?;
        let width = transitions[*first].input.len();
        let mut inputs = Array2::zeros((indices.len(), width));
        for (row, &i) in inputs.rows_mut().into_iter().zip(indices) {
            let input = &transitions[i].input;
            if input.len() != width {
                return Err(Error::Contract("ragged observation widths in one batch".into()));
            }
            row.into_slice().expect("contiguous row").copy_from_slice(input);
        }
        let col = |f: fn(&Transition<T>) -> T| indices.iter().map(|&i| f(&transitions[i])).collect::<Array1<T>>();
        Ok(Self {
            inputs,
            actions: col(|t| t.action),
            logp_old: col(|t| t.logp),
            sigma: col(|t| t.sigma),
            advantages: col(|t| t.advantage),
            returns: col(|t| t.ret),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs<T> {
    pub clip_eps: T,
    pub value_scale: T,
    pub entropy_scale: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    pub total: T,
    /// Negated mean clipped surrogate.
    pub policy: T,
    /// Mean squared value error.
    pub value: T,
    pub entropy: T,
    /// Fraction of samples where the clipped branch was selected.
    pub clip_fraction: T,
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)` and
/// whether the unclipped branch carries the gradient.
pub fn clipped_surrogate<T: Scalar>(ratio: T, advantage: T, clip_eps: T) -> (T, bool) {
    let one = T::one();
    let clipped = ratio.max(one - clip_eps).min(one + clip_eps);
    let unclipped_obj = ratio * advantage;
    let clipped_obj = clipped * advantage;
    if unclipped_obj <= clipped_obj {
        (unclipped_obj, true)
    } else {
        (clipped_obj, false)
    }
}

struct Pass<T: Scalar> {
    terms: LossTerms<T>,
    d_mu_pre: Array1<T>,
    d_value: Array1<T>,
}

fn evaluate<T: Scalar>(mu: &Array1<T>, value: &Array1<T>, batch: &Batch<T>, coefs: &LossCoefs<T>) -> Pass<T> {
    let n = batch.len();
    let inv_n = T::one() / T::lit(n as f64);
    let two = T::lit(2.0);
    let mut d_mu_pre = Array1::zeros(n);
    let mut d_value = Array1::zeros(n);
    let (mut surrogate, mut value_err, mut ent, mut clipped) = (T::zero(), T::zero(), T::zero(), 0usize);
    for i in 0..n {
        let sigma = batch.sigma[i];
        let (m, a, adv) = (mu[i], batch.actions[i], batch.advantages[i]);
        // zero exploration leaves no density ratio; only the value term learns
        if sigma > T::zero() {
            let ratio = (log_prob(a, m, sigma) - batch.logp_old[i]).exp();
            let (obj, active) = clipped_surrogate(ratio, adv, coefs.clip_eps);
            surrogate = surrogate + obj;
            if active {
                // d/dmu of -r*A, with r' = r * (a - mu) / sigma^2, through tanh
                let d_mu = -adv * ratio * (a - m) / (sigma * sigma) * inv_n;
                d_mu_pre[i] = d_mu * (T::one() - m * m);
            } else {
                clipped += 1;
            }
            ent = ent + entropy(sigma);
        }
        let err = value[i] - batch.returns[i];
        value_err = value_err + err * err;
        d_value[i] = coefs.value_scale * two * err * inv_n;
    }
    let policy = -surrogate * inv_n;
    let value_loss = value_err * inv_n;
    let entropy_mean = ent * inv_n;
    Pass {
        terms: LossTerms {
            total: policy + coefs.value_scale * value_loss - coefs.entropy_scale * entropy_mean,
            policy,
            value: value_loss,
            entropy: entropy_mean,
            clip_fraction: T::lit(clipped as f64) * inv_n,
        },
        d_mu_pre,
        d_value,
    }
}

/// Loss value only.
pub fn ppo_loss<T: Scalar>(net: &PolicyNet<T>, batch: &Batch<T>, coefs: &LossCoefs<T>) -> Result<LossTerms<T>> {
    let cache = net.forward_batch(&batch.inputs)?;
    Ok(evaluate(&cache.mu, &cache.value, batch, coefs).terms)
}

/// Loss and its gradient w.r.t. every network parameter.
pub fn ppo_loss_and_grad<T: Scalar>(net: &PolicyNet<T>, batch: &Batch<T>, coefs: &LossCoefs<T>) -> Result<(LossTerms<T>, PolicyNet<T>)> {
    let cache = net.forward_batch(&batch.inputs)?;
    let pass = evaluate(&cache.mu, &cache.value, batch, coefs);
    let grad = net.backward(&batch.inputs, &cache, &pass.d_mu_pre, &pass.d_value);
    Ok((pass.terms, grad))
}
