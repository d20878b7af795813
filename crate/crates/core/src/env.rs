//! Episodic environment: world, perception pipeline and reward behind a
//! `reset`/`step` interface. Agents, the teleop service and log replay all
//! drive episodes through this type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{assemble_observation, Observation, Scenario};
use crate::perception::{apply_perturbation, current_case, render_bev, sample_mpc_schedule, MpcSchedule, PerturbationCase, SemanticGrid};
use crate::reward::{compute_reward, momentary_speed, RewardParams};
use crate::sim::{advance, reset, EpisodeStatus, WorldConfig, WorldState};

/// How the perceptual case of an episode is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CaseSpec {
    Fixed { case: PerturbationCase },
    /// Mixed case drawn from a schedule seed.
    Mpc { seed: u64 },
}

impl CaseSpec {
    pub fn fixed(case: PerturbationCase) -> Self {
        CaseSpec::Fixed { case }
    }

    pub fn label(&self) -> String {
        match self {
            CaseSpec::Fixed { case } => case.tag().to_string(),
            CaseSpec::Mpc { .. } => "MPC".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
enum CaseSource {
    Fixed(PerturbationCase),
    Mpc(MpcSchedule),
}

impl CaseSource {
    fn build(spec: CaseSpec, config: &WorldConfig) -> Result<Self> {
        Ok(match spec {
            CaseSpec::Fixed { case } => CaseSource::Fixed(case),
            // one extra step so the observation after the last step has a case
            CaseSpec::Mpc { seed } => CaseSource::Mpc(sample_mpc_schedule(seed, u64::from(config.t_max) + 1)?),
        })
    }

    fn at(&self, t: u32) -> Result<PerturbationCase> {
        match self {
            CaseSource::Fixed(case) => Ok(*case),
            CaseSource::Mpc(schedule) => current_case(schedule, u64::from(t)),
        }
    }
}

/// Everything recorded about one transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Step index after the transition (1-based).
    pub t: u32,
    /// Case of the observation the action was chosen on.
    pub case: PerturbationCase,
    pub a_tilde: f64,
    pub a: f64,
    pub reward: f64,
    pub ego_position: f64,
    pub ego_velocity: f64,
    pub front_gap: Option<f64>,
    /// Index of the observation the action was chosen on.
    pub obs: u32,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub observation: Observation,
    pub reward: f64,
    pub status: EpisodeStatus,
    pub record: StepRecord,
}

#[derive(Debug, Clone)]
pub struct DrivingEnv {
    config: WorldConfig,
    reward: RewardParams<f64>,
    scenario: Scenario,
    world: WorldState,
    source: CaseSource,
    case: PerturbationCase,
    observation: Observation,
}

impl DrivingEnv {
    pub fn new(config: WorldConfig, reward: RewardParams<f64>, scenario: Scenario) -> Result<Self> {
        config.validate()?;
        reward.validate()?;
        let world = reset(&config, config.seed)?;
        let case = PerturbationCase::Vevv;
        let observation = perceive(&world, case, scenario, &config);
        Ok(Self {
            config,
            reward,
            scenario,
            world,
            source: CaseSource::Fixed(case),
            case,
            observation,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn reward_params(&self) -> &RewardParams<f64> {
        &self.reward
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    /// Case currently corrupting the agent's perception.
    pub fn case(&self) -> PerturbationCase {
        self.case
    }

    pub fn status(&self) -> EpisodeStatus {
        self.world.status
    }

    /// Grid the agent currently perceives.
    pub fn perceived_grid(&self) -> SemanticGrid {
        apply_perturbation(&render_bev(&self.world), self.case, &self.world)
    }

    pub fn reset(&mut self, world_seed: u64, spec: CaseSpec) -> Result<&Observation> {
        self.world = reset(&self.config, world_seed)?;
        self.source = CaseSource::build(spec, &self.config)?;
        self.case = self.source.at(0)?;
        self.observation = perceive(&self.world, self.case, self.scenario, &self.config);
        Ok(&self.observation)
    }

    /// Applies the raw action `a_tilde` and returns the resulting transition.
    /// `obs_index` is stored in the step record.
    pub fn step(&mut self, a_tilde: f64, obs_index: u32) -> Result<Transition> {
        if !a_tilde.is_finite() {
            return Err(Error::Domain(format!("non-finite action {a_tilde}")));
        }
        let acted_case = self.case;
        let prev = self.world.ego().position_m;
        let applied = advance(&mut self.world, a_tilde, &self.config)?;
        let ego = *self.world.ego();
        let v_mom = momentary_speed(prev, ego.position_m, self.config.route_length_m);
        let status = self.world.status;
        let reward = compute_reward(self.world.t, v_mom, &status, &self.reward);
        self.case = self.source.at(self.world.t)?;
        self.observation = perceive(&self.world, self.case, self.scenario, &self.config);
        Ok(Transition {
            observation: self.observation.clone(),
            reward,
            status,
            record: StepRecord {
                t: self.world.t,
                case: acted_case,
                a_tilde,
                a: applied,
                reward,
                ego_position: ego.position_m,
                ego_velocity: ego.velocity_mps,
                front_gap: self.world.front_gap_m(),
                obs: obs_index,
            },
        })
    }
}

fn perceive(world: &WorldState, case: PerturbationCase, scenario: Scenario, config: &WorldConfig) -> Observation {
    let grid = apply_perturbation(&render_bev(world), case, world);
    assemble_observation(&grid, world, world.ego().last_action, case, scenario, config)
}
