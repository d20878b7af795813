mod common;

use common::{random_case, COEFS};
use udrive::ppo::{ppo_loss_and_grad, LossCoefs};
use udrive::protocol::{select_best, train_experiment, ExperimentConfig};
use udrive::Scenario;

fn tiny(scenario: Scenario) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_scenario(scenario);
    cfg.total_steps = 3_000;
    cfg.validate_every_n_episodes = 2;
    cfg.validation_episodes = 1;
    cfg.ppo.hidden_width = 8;
    cfg.ppo.rollout_length = 256;
    cfg.ppo.minibatch_size = 64;
    cfg.seed = 17;
    cfg
}

#[test]
fn fixed_seeds_reproduce_the_parameter_trajectory() {
    for scenario in [Scenario::CORRECT, Scenario::INFORMED] {
        let cfg = tiny(scenario);
        let a = train_experiment(&cfg).unwrap();
        let b = train_experiment(&cfg).unwrap();
        assert_eq!(a.episodes, b.episodes);
        assert_eq!(a.validations, b.validations);
        assert_eq!(a.final_checkpoint.params, b.final_checkpoint.params);
        assert_eq!(a.candidates.len(), b.candidates.len());
        for (x, y) in a.candidates.iter().zip(&b.candidates) {
            assert_eq!(x.params, y.params);
        }
        assert!(a.final_checkpoint.params.input_len() == scenario.observation_len());
    }
}

#[test]
fn a_different_seed_changes_the_run() {
    let cfg = tiny(Scenario::CORRECT);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(
        train_experiment(&cfg).unwrap().final_checkpoint.params,
        train_experiment(&other).unwrap().final_checkpoint.params
    );
}

#[test]
fn candidates_are_the_best_training_episodes() {
    let cfg = tiny(Scenario::PERTURBED);
    let run = train_experiment(&cfg).unwrap();
    assert!(run.aborted.is_none());
    assert!(!run.candidates.is_empty() && run.candidates.len() <= cfg.candidates);
    let mut rewards: Vec<f64> = run.episodes.iter().map(|e| e.cumulative_reward).collect();
    rewards.sort_by(|a, b| b.total_cmp(a));
    let kept: Vec<f64> = run.candidates.iter().map(|c| c.meta.episode_reward.unwrap()).collect();
    assert_eq!(kept, rewards[..kept.len()]);
    let chosen = select_best(&run.candidates, &cfg).unwrap();
    assert!(chosen.index < run.candidates.len());
}

#[test]
fn zero_advantage_leaves_only_the_value_gradient() {
    for seed in 0..5 {
        let (net, mut batch) = random_case(seed);
        batch.advantages.fill(0.0);
        let no_value = LossCoefs { value_scale: 0.0, ..COEFS };
        let (_, grad) = ppo_loss_and_grad(&net, &batch, &no_value).unwrap();
        // the entropy term depends only on the scheduled sigma
        assert_eq!(grad.squared_norm(), 0.0);
        let (_, grad) = ppo_loss_and_grad(&net, &batch, &COEFS).unwrap();
        assert!(grad.squared_norm() > 0.0);
    }
}
