//! Deterministic policy rollouts and per-case testing.

use std::path::Path;

use super::config::{derive_seed, stream, CaseChoice, ExperimentConfig};
use super::log::{EpisodeHeader, EpisodeLog, Origin, Outcome, LOG_FORMAT};
use super::metrics::{BehaviorMetrics, EpisodeMetrics};
use crate::env::{CaseSpec, DrivingEnv};
use crate::error::{Error, Result};
use crate::observation::Scenario;
use crate::perception::PerturbationCase;
use crate::ppo::{deterministic_action, PolicyNet};
use crate::reward::RewardParams;
use crate::scalar::Scalar;
use crate::sim::WorldConfig;

/// Drives one episode with the policy mean and returns its full log.
pub fn run_policy_episode<T: Scalar>(
    env: &mut DrivingEnv,
    policy: &PolicyNet<T>,
    spec: CaseSpec,
    world_seed: u64,
    episode: u64,
    policy_label: Option<String>,
) -> Result<EpisodeLog> {
    let scenario = env.scenario();
    if policy.input_len() != scenario.observation_len() {
        return Err(Error::Contract(format!(
            "policy expects {} inputs but {scenario} observations have {}",
            policy.input_len(),
            scenario.observation_len()
        )));
    }
    let mut log = EpisodeLog::new(EpisodeHeader {
        format: LOG_FORMAT,
        origin: Origin::Agent,
        scenario,
        case: spec,
        world_seed,
        world: env.config().clone(),
        reward: *env.reward_params(),
        episode,
        policy: policy_label,
    });
    let mut obs = env.reset(world_seed, spec)?.clone();
    let mut input = vec![T::zero(); obs.len()];
    loop {
        obs.write_input(&mut input)?;
        let (mu, _) = policy.forward(&input)?;
        let a_tilde = deterministic_action(mu).as_f64();
        let tr = env.step(a_tilde, log.steps.len() as u32)?;
        log.push(obs, tr.record);
        if tr.status.is_terminal() {
            let outcome = Outcome::from_status(tr.status.kind).expect("terminal status");
            log.finish(outcome, tr.status.t_terminal);
            return Ok(log);
        }
        obs = tr.observation;
    }
}

/// Mean undiscounted episode reward over `episodes` deterministic episodes
/// on the validation seed stream.
pub fn validate_policy<T: Scalar>(policy: &PolicyNet<T>, cfg: &ExperimentConfig, episodes: usize) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Contract("validation needs at least one episode".into()));
    }
    let mut env = DrivingEnv::new(cfg.world.clone(), cfg.reward, cfg.scenario)?;
    let mut total = 0.0;
    for i in 0..episodes as u64 {
        let spec = cfg.training_case.spec(derive_seed(cfg.seed, stream::VALID_SCHEDULE, i));
        let log = run_policy_episode(&mut env, policy, spec, derive_seed(cfg.seed, stream::VALID_WORLD, i), i, None)?;
        total += log.cumulative_reward();
    }
    Ok(total / episodes as f64)
}

/// Settings for one test batch.
#[derive(Debug, Clone)]
pub struct TestPlan {
    pub world: WorldConfig,
    pub reward: RewardParams<f64>,
    /// Scenario observations are built for; 4 feeds a zero uncertainty code.
    pub scenario: Scenario,
    pub case: CaseChoice,
    pub episodes: usize,
    pub seed: u64,
    /// Opt-in for the non-default XEVV test case.
    pub allow_xevv: bool,
}

impl TestPlan {
    pub fn new(cfg: &ExperimentConfig, case: CaseChoice) -> Self {
        Self {
            world: cfg.world.clone(),
            reward: cfg.reward,
            scenario: cfg.scenario,
            case,
            episodes: cfg.test_episodes,
            seed: cfg.seed,
            allow_xevv: false,
        }
    }

    fn check(&self, input_len: usize) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Contract("test needs at least one episode".into()));
        }
        if self.case == CaseChoice::Fixed(PerturbationCase::Xevv) && !self.allow_xevv {
            return Err(Error::Contract("XEVV is not a default test case; opt in explicitly".into()));
        }
        if self.scenario == Scenario::CORRECT_INFORMED && self.case != CaseChoice::Fixed(PerturbationCase::Vevv) {
            return Err(Error::Contract("scenario 4 tests only the unperturbed case".into()));
        }
        if input_len != self.scenario.observation_len() {
            return Err(Error::Contract(format!(
                "policy expects {input_len} inputs but {} observations have {}",
                self.scenario,
                self.scenario.observation_len()
            )));
        }
        Ok(())
    }
}

/// Runs the plan's deterministic test episodes. Each finished log is handed
/// to `sink` (index, log) before aggregation.
pub fn test_policy<T: Scalar>(
    policy: &PolicyNet<T>,
    plan: &TestPlan,
    mut sink: impl FnMut(usize, &EpisodeLog) -> Result<()>,
) -> Result<BehaviorMetrics> {
    plan.check(policy.input_len())?;
    let mut env = DrivingEnv::new(plan.world.clone(), plan.reward, plan.scenario)?;
    let mut parts = Vec::with_capacity(plan.episodes);
    for i in 0..plan.episodes {
        let idx = i as u64;
        let spec = plan.case.spec(derive_seed(plan.seed, stream::TEST_SCHEDULE, idx));
        let log = run_policy_episode(&mut env, policy, spec, derive_seed(plan.seed, stream::TEST_WORLD, idx), idx, None)?;
        sink(i, &log)?;
        parts.push(EpisodeMetrics::from_log(&log)?);
    }
    BehaviorMetrics::aggregate(parts)
}

/// [`test_policy`] writing every episode log to `dir` as `<label>_<index>`.
pub fn test_policy_logged<T: Scalar>(policy: &PolicyNet<T>, plan: &TestPlan, dir: &Path) -> Result<BehaviorMetrics> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let label = plan.case.label().to_ascii_lowercase();
    test_policy(policy, plan, |i, log| log.write(dir, &format!("{label}_{i:03}")).map(|_| ()))
}
