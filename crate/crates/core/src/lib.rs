//! Longitudinal driving under perceptual uncertainty.
//!
//! A point-mass lane simulator with scripted traffic, a 4×25 semantic
//! bird's-eye-view sensor whose vehicles can be hidden per perturbation
//! case, the agent's observation and reward, a PPO learner, and the
//! train/validate/test pipeline with replayable episode logs.
//!
//! The learner and reward are generic over [`Scalar`]; the aliases below fix
//! the precision used in practice. The simulator itself is always `f64`.

pub mod env;
pub mod error;
pub mod observation;
pub mod perception;
pub mod ppo;
pub mod protocol;
pub mod reward;
pub mod scalar;
pub mod sim;

pub use env::{CaseSpec, DrivingEnv, StepRecord};
pub use error::{Error, Result};
pub use observation::{assemble_observation, encode_uncertainty, Observation, Scenario};
pub use perception::{apply_perturbation, render_bev, sample_mpc_schedule, MpcSchedule, PerturbationCase, SemanticGrid};
pub use reward::{compute_reward, momentary_speed};
pub use scalar::Scalar;
pub use sim::{advance, apply_inertia, reset, WorldConfig, WorldState};

/// Policy network at training precision.
pub type Policy = ppo::PolicyNet<f32>;
/// Policy network in double precision, used for gradient checks.
pub type PolicyF64 = ppo::PolicyNet<f64>;
/// Reward constants over the simulator's precision.
pub type RewardParams = reward::RewardParams<f64>;
