//! Training runs: PPO over the scenario's training case with periodic
//! validation and best-episode checkpoints.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, stream, ExperimentConfig};
use super::evaluate::validate_policy;
use super::log::Outcome;
use crate::env::DrivingEnv;
use crate::error::{Error, Result};
use crate::ppo::checkpoint::{Checkpoint, CheckpointMeta};
use crate::ppo::{compute_advantages, make_optimizer, ppo_update, sample_action, sigma_schedule, PolicyNet, Rollout, Transition};

/// One training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Global step count after the episode.
    pub global_step: u64,
    pub steps: u32,
    pub outcome: Outcome,
    pub cumulative_reward: f64,
    pub sigma: f64,
}

/// One periodic validation of the current parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub after_episode: u64,
    pub global_step: u64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: ExperimentConfig,
    pub episodes: Vec<EpisodeRecord>,
    pub validations: Vec<ValidationRecord>,
    /// Best training episodes by cumulative reward, best first; equal
    /// rewards keep the earlier episode ahead.
    pub candidates: Vec<Checkpoint>,
    pub final_checkpoint: Checkpoint,
    /// Set when training stopped early because it diverged.
    pub aborted: Option<String>,
}

/// Indices of the `k` largest values, largest first; ties favour the lower index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Index of the largest value; the first one on ties.
pub fn argmax_earliest(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v <= b => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

struct Board {
    k: usize,
    entries: Vec<Checkpoint>,
}

impl Board {
    fn reward(c: &Checkpoint) -> f64 {
        c.meta.episode_reward.unwrap_or(f64::NEG_INFINITY)
    }

    fn qualifies(&self, reward: f64) -> bool {
        self.entries.len() < self.k || self.entries.last().is_some_and(|w| reward > Self::reward(w))
    }

    fn insert(&mut self, ck: Checkpoint) {
        let r = Self::reward(&ck);
        let pos = self.entries.iter().position(|e| r > Self::reward(e)).unwrap_or(self.entries.len());
        self.entries.insert(pos, ck);
        self.entries.truncate(self.k);
    }
}

/// Trains the configured scenario for `total_steps` environment steps
/// (finishing the episode in progress). Divergence stops training and is
/// reported in [`TrainRun::aborted`] with everything gathered so far.
pub fn train_experiment(cfg: &ExperimentConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let h = &cfg.ppo;
    let scenario = cfg.scenario;
    let mut env = DrivingEnv::new(cfg.world.clone(), cfg.reward, scenario)?;
    let mut net = PolicyNet::<f32>::init(
        scenario.observation_len(),
        h.hidden_width,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::NET_INIT, 0)),
    );
    let mut optimizer = make_optimizer(h, &net);
    let mut sampler = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::SAMPLER, 0));
    let mut shuffler = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::SHUFFLE, 0));
    let reward_scale = h.reward_scale as f32;

    let meta = |step: u64, episode: Option<u64>, reward: Option<f64>| CheckpointMeta {
        scenario,
        global_step: step,
        hyper: h.clone(),
        episode,
        episode_reward: reward,
    };

    let mut board = Board { k: cfg.candidates, entries: Vec::new() };
    let mut episodes = Vec::new();
    let mut validations = Vec::new();
    let mut rollout = Rollout::<f32>::default();
    let mut global_step = 0u64;
    let mut aborted = None;
    let mut episode = 0u64;

    'training: while global_step < cfg.total_steps {
        let spec = cfg.training_case.spec(derive_seed(cfg.seed, stream::TRAIN_SCHEDULE, episode));
        let mut obs = env.reset(derive_seed(cfg.seed, stream::TRAIN_WORLD, episode), spec)?.clone();
        let mut total_reward = 0.0;
        let mut steps = 0u32;
        let sigma_start = sigma_schedule(global_step, h);
        let outcome = loop {
            let input: Vec<f32> = obs.to_input();
            let (mu, value) = net.forward(&input)?;
            let sigma = sigma_schedule(global_step, h) as f32;
            let s = sample_action(mu, sigma, &mut sampler);
            let tr = env.step(f64::from(s.action), steps)?;
            steps += 1;
            global_step += 1;
            total_reward += tr.reward;
            let done = tr.status.is_terminal();
            rollout.transitions.push(Transition::new(input, s.draw, s.logp, sigma, tr.reward as f32 * reward_scale, value, done));
            obs = tr.observation;
            if rollout.len() >= h.rollout_length {
                rollout.bootstrap_value = if done { 0.0 } else { net.forward(&obs.to_input::<f32>())?.1 };
                if let Some(msg) = diverged(learn(&mut rollout, &mut net, cfg, &mut optimizer, &mut shuffler))? {
                    aborted = Some(msg);
                    break 'training;
                }
            }
            if done {
                break Outcome::from_status(tr.status.kind).expect("terminal status");
            }
        };
        episodes.push(EpisodeRecord {
            episode,
            global_step,
            steps,
            outcome,
            cumulative_reward: total_reward,
            sigma: sigma_start,
        });
        if board.qualifies(total_reward) {
            board.insert(Checkpoint { meta: meta(global_step, Some(episode), Some(total_reward)), params: net.clone() });
        }
        episode += 1;
        if episode % cfg.validate_every_n_episodes == 0 && cfg.validation_episodes > 0 {
            let frozen = net.clone();
            let mean_reward = validate_policy(&frozen, cfg, cfg.validation_episodes)?;
            log::info!("{scenario} episode {episode} step {global_step}: validation mean reward {mean_reward:.2}");
            validations.push(ValidationRecord { after_episode: episode, global_step, mean_reward });
        }
    }
    if aborted.is_none() && !rollout.is_empty() {
        // training stops at an episode boundary, so nothing to bootstrap
        rollout.bootstrap_value = 0.0;
        aborted = diverged(learn(&mut rollout, &mut net, cfg, &mut optimizer, &mut shuffler))?;
    }
    if let Some(msg) = &aborted {
        log::error!("{scenario} training diverged at step {global_step}: {msg}");
    }
    Ok(TrainRun {
        config: cfg.clone(),
        episodes,
        validations,
        candidates: board.entries,
        final_checkpoint: Checkpoint { meta: meta(global_step, None, None), params: net },
        aborted,
    })
}

/// Turns divergence into a message; other errors pass through.
fn diverged(r: Result<()>) -> Result<Option<String>> {
    match r {
        Ok(()) => Ok(None),
        Err(e @ Error::Diverged(_)) => Ok(Some(e.to_string())),
        Err(e) => Err(e),
    }
}

fn learn(
    rollout: &mut Rollout<f32>,
    net: &mut PolicyNet<f32>,
    cfg: &ExperimentConfig,
    optimizer: &mut crate::ppo::AnyOptimizer<f32>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let h = &cfg.ppo;
    compute_advantages(rollout, h.gamma as f32, h.gae_lambda as f32)?;
    let stats = ppo_update(&mut rollout.transitions, net, h, optimizer, rng)?;
    log::debug!("update: loss {:.4} value {:.4} clip {:.3}", stats.mean_total, stats.mean_value, stats.mean_clip_fraction);
    rollout.transitions.clear();
    Ok(())
}

/// Outcome of [`select_best`].
#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    /// Validation mean per candidate; empty when only one candidate existed.
    pub means: Vec<f64>,
    pub checkpoint: Checkpoint,
}

/// Validates every candidate with the mean action and picks the highest
/// mean reward, the earliest candidate on ties.
pub fn select_best(candidates: &[Checkpoint], cfg: &ExperimentConfig) -> Result<Selection> {
    match candidates {
        [] => Err(Error::Contract("no candidate checkpoints to select from".into())),
        [only] => Ok(Selection { index: 0, means: Vec::new(), checkpoint: only.clone() }),
        _ => {
            let means = candidates
                .iter()
                .map(|c| validate_policy(&c.params, cfg, cfg.validation_episodes))
                .collect::<Result<Vec<_>>>()?;
            let index = argmax_earliest(&means).ok_or_else(|| Error::Contract("no finite validation mean".into()))?;
            Ok(Selection { index, checkpoint: candidates[index].clone(), means })
        }
    }
}

/// File name of the `i`-th candidate checkpoint.
pub fn candidate_file(i: usize) -> String {
    format!("candidate_{i}.ckpt")
}

/// Loads `candidate_0.ckpt, candidate_1.ckpt, ...` from a run directory.
pub fn load_candidates(dir: &Path) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    loop {
        let path = dir.join(candidate_file(out.len()));
        if !path.exists() {
            break;
        }
        out.push(Checkpoint::load(&path)?);
    }
    if out.is_empty() {
        return Err(Error::Contract(format!("no candidate checkpoints in {}", dir.display())));
    }
    Ok(out)
}

impl TrainRun {
    /// Writes `episodes.csv`, `validation.csv`, the candidate and final
    /// checkpoints, and `config.toml`. Returns the written paths.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let csv_err = |p: &Path, e: csv::Error| Error::Malformed { what: "csv", detail: format!("{}: {e}", p.display()) };

        let path = dir.join("episodes.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for r in &self.episodes {
            w.serialize(r).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);

        let path = dir.join("validation.csv");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["after_episode", "global_step", "mean_reward"]).map_err(|e| csv_err(&path, e))?;
        for r in &self.validations {
            w.serialize(r).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);

        for (i, c) in self.candidates.iter().enumerate() {
            let path = dir.join(candidate_file(i));
            c.save(&path)?;
            written.push(path);
        }
        let path = dir.join("final.ckpt");
        self.final_checkpoint.save(&path)?;
        written.push(path);

        let path = dir.join("config.toml");
        let text = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "# config hash {}", self.config.hash()).map_err(|e| Error::io(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
