//! Experiment pipeline: configuration, training, testing, logs and metrics.

pub mod config;
pub mod evaluate;
pub mod log;
pub mod metrics;
pub mod train;

pub use config::{derive_seed, CaseChoice, ExperimentConfig};
pub use evaluate::{run_policy_episode, test_policy, test_policy_logged, validate_policy, TestPlan};
pub use log::{replay_episode, replay_with, EpisodeLog, Origin, Outcome, ReplayReport};
pub use metrics::{compute_metrics, record_human_reference, BehaviorMetrics, EpisodeMetrics, FiveNumber, Panel, ReferenceTrace};
pub use train::{select_best, train_experiment, Selection, TrainRun};
