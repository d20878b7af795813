//! One PPO update over a finished rollout.

use rand::seq::SliceRandom;
use rand::Rng;

use super::gae::{normalize_advantages, Transition};
use super::loss::{ppo_loss_and_grad, Batch, LossCoefs, LossTerms};
use super::net::PolicyNet;
use super::optim::Optimizer;
use super::PpoHyperParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub minibatches: usize,
    pub mean_total: f64,
    pub mean_policy: f64,
    pub mean_value: f64,
    pub mean_clip_fraction: f64,
}

/// Runs `epochs_per_update` passes of shuffled minibatches over `batch`.
///
/// Advantages must already be estimated; they are normalized here across
/// the whole batch. A non-finite loss or gradient aborts before the
/// offending step is applied.
pub fn ppo_update<T: Scalar, O: Optimizer<T>, R: Rng + ?Sized>(
    batch: &mut [Transition<T>],
    params: &mut PolicyNet<T>,
    h: &PpoHyperParams,
    optimizer: &mut O,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::Contract("PPO update on an empty batch".into()));
    }
    normalize_advantages(batch);
    let coefs = LossCoefs {
        clip_eps: T::lit(h.clip_eps),
        value_scale: T::lit(h.value_loss_scale),
        entropy_scale: T::lit(h.entropy_scale),
    };
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..h.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(h.minibatch_size) {
            let mb = Batch::gather(batch, chunk)?;
            let (terms, mut grad) = ppo_loss_and_grad(params, &mb, &coefs)?;
            check_finite(&terms, &grad, epoch)?;
            if h.max_grad_norm > 0.0 {
                let norm = grad.squared_norm().sqrt();
                let limit = T::lit(h.max_grad_norm);
                if norm > limit {
                    grad.scale(limit / norm);
                }
            }
            optimizer.step(params, &grad);
            stats.minibatches += 1;
            stats.mean_total += terms.total.as_f64();
            stats.mean_policy += terms.policy.as_f64();
            stats.mean_value += terms.value.as_f64();
            stats.mean_clip_fraction += terms.clip_fraction.as_f64();
        }
    }
    if !params.is_finite() {
        return Err(Error::Diverged("non-finite parameters after update".into()));
    }
    let n = stats.minibatches as f64;
    stats.mean_total /= n;
    stats.mean_policy /= n;
    stats.mean_value /= n;
    stats.mean_clip_fraction /= n;
    Ok(stats)
}

fn check_finite<T: Scalar>(terms: &LossTerms<T>, grad: &PolicyNet<T>, epoch: usize) -> Result<()> {
    if !terms.total.is_finite() {
        return Err(Error::Diverged(format!(
            "loss is {} in epoch {epoch} (policy {}, value {})",
            terms.total, terms.policy, terms.value
        )));
    }
    if !grad.is_finite() {
        return Err(Error::Diverged(format!("non-finite gradient in epoch {epoch}")));
    }
    Ok(())
}
