//! Proximal policy optimization: network, exploration, advantage
//! estimation, clipped objective and parameter updates.

pub mod checkpoint;
pub mod gae;
pub mod gaussian;
mod hyper;
pub mod loss;
pub mod net;
pub mod optim;
mod update;

pub use gae::{compute_advantages, normalize_advantages, Rollout, Transition};
pub use gaussian::{deterministic_action, entropy, log_prob, sample_action, Sampled};
pub use hyper::{sigma_schedule, OptimizerKind, PpoHyperParams};
pub use loss::{clipped_surrogate, ppo_loss, ppo_loss_and_grad, Batch, LossCoefs, LossTerms};
pub use net::{ForwardCache, PolicyNet};
pub use optim::{Adam, AnyOptimizer, Optimizer, Sgd};
pub use update::{ppo_update, UpdateStats};

use crate::scalar::Scalar;

/// Optimizer selected by the hyperparameters.
pub fn make_optimizer<T: Scalar>(h: &PpoHyperParams, shape: &PolicyNet<T>) -> AnyOptimizer<T> {
    let lr = T::lit(h.learning_rate);
    match h.optimizer {
        OptimizerKind::Sgd => AnyOptimizer::Sgd(Sgd { lr }),
        OptimizerKind::Adam => AnyOptimizer::Adam(Adam::new(lr, shape)),
    }
}
