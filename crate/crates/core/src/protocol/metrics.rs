//! Behavioral metrics over episode logs and their CSV exports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::log::{EpisodeLog, Origin, Outcome};
use crate::error::{Error, Result};

/// Per-episode quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub outcome: Outcome,
    pub steps: u32,
    pub traveled_m: f64,
    pub brake_steps: u32,
    pub throttle_steps: u32,
    /// Steps with negative applied action over steps with non-negative
    /// applied action; infinite when the ego never throttled.
    pub brake_to_throttle_ratio: f64,
    pub mean_velocity: f64,
    pub median_front_distance_m: f64,
    pub cumulative_reward: f64,
}

impl EpisodeMetrics {
    /// Also returns the per-step front distances for pooling.
    pub fn from_log(log: &EpisodeLog) -> Result<(Self, Vec<f64>)> {
        let last = log.steps.last().ok_or_else(|| Error::Malformed { what: "episode log", detail: "no steps".into() })?;
        let outcome = log
            .outcome()
            .ok_or_else(|| Error::Malformed { what: "episode log", detail: "episode has no end record".into() })?;
        let origin = log
            .header
            .world
            .spawn_layout()
            .map(|l| l[crate::sim::Role::Ego.index()].offset_m)?;
        let brake_steps = log.steps.iter().filter(|s| s.a < 0.0).count() as u32;
        let throttle_steps = log.steps.len() as u32 - brake_steps;
        let ratio = if throttle_steps == 0 {
            f64::INFINITY
        } else {
            f64::from(brake_steps) / f64::from(throttle_steps)
        };
        let gaps: Vec<f64> = log.steps.iter().filter_map(|s| s.front_gap).collect();
        let n = log.steps.len() as f64;
        Ok((
            Self {
                episode: log.header.episode,
                outcome,
                steps: log.steps.len() as u32,
                traveled_m: last.ego_position - origin,
                brake_steps,
                throttle_steps,
                brake_to_throttle_ratio: ratio,
                mean_velocity: log.steps.iter().map(|s| s.ego_velocity).sum::<f64>() / n,
                median_front_distance_m: FiveNumber::of(&gaps).map_or(f64::NAN, |f| f.median),
                cumulative_reward: log.cumulative_reward(),
            },
            gaps,
        ))
    }
}

/// Boxplot summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

impl FiveNumber {
    /// `None` for an empty sample. NaNs are ignored.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            if lo == hi || v[lo] == v[hi] {
                v[lo]
            } else {
                v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
            }
        };
        Some(Self { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1], n: v.len() })
    }
}

/// The four boxplot panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    TraveledDistance,
    BrakeToThrottleRatio,
    EpisodeSteps,
    FrontDistance,
}

impl Panel {
    pub const ALL: [Panel; 4] = [Panel::TraveledDistance, Panel::BrakeToThrottleRatio, Panel::EpisodeSteps, Panel::FrontDistance];

    pub fn name(self) -> &'static str {
        match self {
            Panel::TraveledDistance => "traveled_distance_m",
            Panel::BrakeToThrottleRatio => "brake_to_throttle_ratio",
            Panel::EpisodeSteps => "episode_steps",
            Panel::FrontDistance => "front_distance_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMetrics {
    pub episodes: Vec<EpisodeMetrics>,
    /// Gap to the nearest true front vehicle at every logged step.
    pub front_distance_m: Vec<f64>,
    pub finish_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub stalled_rate: f64,
}

impl BehaviorMetrics {
    /// Aggregates per-episode results in the given order.
    pub fn aggregate(parts: Vec<(EpisodeMetrics, Vec<f64>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Contract("no episodes to aggregate".into()));
        }
        let mut episodes = Vec::with_capacity(parts.len());
        let mut front = Vec::new();
        for (m, gaps) in parts {
            front.extend(gaps);
            episodes.push(m);
        }
        let terminal = episodes.iter().filter(|e| e.outcome != Outcome::Aborted).count();
        let rate = |o: Outcome| {
            if terminal == 0 {
                0.0
            } else {
                episodes.iter().filter(|e| e.outcome == o).count() as f64 / terminal as f64
            }
        };
        Ok(Self {
            finish_rate: rate(Outcome::Finished),
            collision_rate: rate(Outcome::Collided),
            timeout_rate: rate(Outcome::Timeout),
            stalled_rate: rate(Outcome::Stalled),
            episodes,
            front_distance_m: front,
        })
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.episodes.iter().filter(|e| e.outcome == outcome).count()
    }

    pub fn values(&self, panel: Panel) -> Vec<f64> {
        match panel {
            Panel::TraveledDistance => self.episodes.iter().map(|e| e.traveled_m).collect(),
            Panel::BrakeToThrottleRatio => self.episodes.iter().map(|e| e.brake_to_throttle_ratio).collect(),
            Panel::EpisodeSteps => self.episodes.iter().map(|e| f64::from(e.steps)).collect(),
            Panel::FrontDistance => self.front_distance_m.clone(),
        }
    }

    pub fn summary(&self, panel: Panel) -> Option<FiveNumber> {
        FiveNumber::of(&self.values(panel))
    }

    pub fn median(&self, panel: Panel) -> f64 {
        self.summary(panel).map_or(f64::NAN, |f| f.median)
    }

    /// One row per episode plus a trailing `summary` row holding medians and
    /// (in the outcome indicator columns) the outcome rates.
    pub fn write_episode_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record([
            "episode",
            "outcome",
            "steps",
            "traveled_m",
            "brake_steps",
            "throttle_steps",
            "brake_to_throttle_ratio",
            "mean_velocity_mps",
            "median_front_distance_m",
            "cumulative_reward",
            "finished",
            "collided",
            "timeout",
            "stalled",
        ])
        .map_err(|e| csv_err(path, e))?;
        let ind = |b: bool| if b { "1" } else { "0" }.to_string();
        for e in &self.episodes {
            w.write_record([
                e.episode.to_string(),
                e.outcome.to_string(),
                e.steps.to_string(),
                e.traveled_m.to_string(),
                e.brake_steps.to_string(),
                e.throttle_steps.to_string(),
                e.brake_to_throttle_ratio.to_string(),
                e.mean_velocity.to_string(),
                e.median_front_distance_m.to_string(),
                e.cumulative_reward.to_string(),
                ind(e.outcome == Outcome::Finished),
                ind(e.outcome == Outcome::Collided),
                ind(e.outcome == Outcome::Timeout),
                ind(e.outcome == Outcome::Stalled),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        let med = |vals: Vec<f64>| FiveNumber::of(&vals).map_or(f64::NAN, |f| f.median).to_string();
        w.write_record([
            "summary".to_string(),
            String::new(),
            med(self.values(Panel::EpisodeSteps)),
            med(self.values(Panel::TraveledDistance)),
            med(self.episodes.iter().map(|e| f64::from(e.brake_steps)).collect()),
            med(self.episodes.iter().map(|e| f64::from(e.throttle_steps)).collect()),
            med(self.values(Panel::BrakeToThrottleRatio)),
            med(self.episodes.iter().map(|e| e.mean_velocity).collect()),
            med(self.front_distance_m.clone()),
            med(self.episodes.iter().map(|e| e.cumulative_reward).collect()),
            self.finish_rate.to_string(),
            self.collision_rate.to_string(),
            self.timeout_rate.to_string(),
            self.stalled_rate.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Metrics over complete episode logs.
pub fn compute_metrics(logs: &[EpisodeLog]) -> Result<BehaviorMetrics> {
    if logs.is_empty() {
        return Err(Error::Malformed { what: "episode logs", detail: "empty".into() });
    }
    BehaviorMetrics::aggregate(logs.iter().map(EpisodeMetrics::from_log).collect::<Result<_>>()?)
}

/// One boxplot row: experiment label, test case, panel and its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub experiment: String,
    pub case: String,
    pub panel: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

pub fn boxplot_rows(experiment: &str, case: &str, metrics: &BehaviorMetrics) -> Vec<BoxplotRow> {
    Panel::ALL
        .iter()
        .filter_map(|p| {
            metrics.summary(*p).map(|f| BoxplotRow {
                experiment: experiment.to_string(),
                case: case.to_string(),
                panel: p.name().to_string(),
                min: f.min,
                q1: f.q1,
                median: f.median,
                q3: f.q3,
                max: f.max,
                n: f.n,
            })
        })
        .collect()
}

pub fn write_boxplot_csv(rows: &[BoxplotRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Malformed { what: "csv", detail: format!("{}: {e}", path.display()) }
}

/// Per-step driving trace of one episode, tagged with who drove.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrace {
    pub origin: Origin,
    pub outcome: Option<Outcome>,
    pub t: Vec<u32>,
    pub velocity: Vec<f64>,
    pub front_gap: Vec<Option<f64>>,
    pub a_tilde: Vec<f64>,
}

/// Column names shared by trace exports.
pub const TRACE_COLUMNS: [&str; 4] = ["t", "velocity_mps", "front_gap_m", "a_tilde"];

impl ReferenceTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `t, velocity_mps, front_gap_m, a_tilde` rows; a trailing `# aborted`
    /// comment marks traces of unfinished sessions.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(TRACE_COLUMNS).map_err(|e| csv_err(path, e))?;
        for i in 0..self.len() {
            w.write_record([
                self.t[i].to_string(),
                self.velocity[i].to_string(),
                self.front_gap[i].map_or(String::new(), |g| g.to_string()),
                self.a_tilde[i].to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        drop(w);
        if self.outcome == Some(Outcome::Aborted) {
            use std::io::Write;
            let mut f = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "# aborted").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Extracts the distance and velocity traces of a (human) episode log.
pub fn record_human_reference(log: &EpisodeLog) -> Result<ReferenceTrace> {
    if log.steps.is_empty() {
        return Err(Error::Malformed { what: "teleop log", detail: "session has no steps".into() });
    }
    if log.steps.windows(2).any(|w| w[1].t != w[0].t + 1) {
        return Err(Error::Malformed { what: "teleop log", detail: "non-consecutive steps".into() });
    }
    Ok(ReferenceTrace {
        origin: log.header.origin,
        outcome: log.outcome(),
        t: log.steps.iter().map(|s| s.t).collect(),
        velocity: log.steps.iter().map(|s| s.ego_velocity).collect(),
        front_gap: log.steps.iter().map(|s| s.front_gap).collect(),
        a_tilde: log.steps.iter().map(|s| s.a_tilde).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CaseSpec, StepRecord};
    use crate::observation::Scenario;
    use crate::perception::PerturbationCase;
    use crate::protocol::log::{EpisodeHeader, LOG_FORMAT};
    use crate::reward::RewardParams;
    use crate::sim::WorldConfig;

    fn synthetic(actions: &[f64], final_pos: f64, outcome: Outcome) -> EpisodeLog {
        let mut log = EpisodeLog::new(EpisodeHeader {
            format: LOG_FORMAT,
            origin: Origin::Human,
            scenario: Scenario::CORRECT,
            case: CaseSpec::fixed(PerturbationCase::Vevv),
            world_seed: 0,
            world: WorldConfig::default(),
            reward: RewardParams::default(),
            episode: 0,
            policy: None,
        });
        let n = actions.len();
        for (i, a) in actions.iter().enumerate() {
            let rec = StepRecord {
                t: i as u32 + 1,
                case: PerturbationCase::Vevv,
                a_tilde: *a,
                a: *a,
                reward: 1.0,
                ego_position: final_pos * (i + 1) as f64 / n as f64,
                ego_velocity: 5.0,
                front_gap: Some(10.0 + i as f64),
                obs: i as u32,
            };
            log.steps.push(rec);
        }
        log.finish(outcome, Some(n as u32));
        log
    }

    #[test]
    fn brake_ratio_counts_steps() {
        let mut actions = vec![-0.5; 10];
        actions.extend(vec![0.5; 40]);
        let (m, _) = EpisodeMetrics::from_log(&synthetic(&actions, 150.3, Outcome::Finished)).unwrap();
        assert_eq!(m.brake_to_throttle_ratio, 0.25);
        assert_eq!(m.traveled_m, 150.3);
        let (m, _) = EpisodeMetrics::from_log(&synthetic(&[0.3; 20], 40.0, Outcome::Collided)).unwrap();
        assert_eq!(m.brake_to_throttle_ratio, 0.0);
        let (m, _) = EpisodeMetrics::from_log(&synthetic(&[-0.3; 20], 4.0, Outcome::Timeout)).unwrap();
        assert!(m.brake_to_throttle_ratio.is_infinite());
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(compute_metrics(&[]).is_err());
        let mut log = synthetic(&[0.1], 1.0, Outcome::Finished);
        log.steps.clear();
        assert!(EpisodeMetrics::from_log(&log).is_err());
        assert!(record_human_reference(&log).is_err());
    }

    #[test]
    fn rates_partition() {
        let logs = vec![
            synthetic(&[0.1; 5], 150.0, Outcome::Finished),
            synthetic(&[0.1; 5], 50.0, Outcome::Collided),
            synthetic(&[0.1; 5], 50.0, Outcome::Collided),
            synthetic(&[0.1; 5], 2.0, Outcome::Stalled),
        ];
        let m = compute_metrics(&logs).unwrap();
        assert_eq!(m.finish_rate + m.collision_rate + m.timeout_rate + m.stalled_rate, 1.0);
        assert_eq!(m.collision_rate, 0.5);
        assert_eq!(m.front_distance_m.len(), 20);
        assert_eq!(m.values(Panel::EpisodeSteps).len(), 4);
    }

    #[test]
    fn five_number_summary() {
        let f = FiveNumber::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let f = FiveNumber::of(&[1.0, 2.0]).unwrap();
        assert_eq!(f.median, 1.5);
        assert!(FiveNumber::of(&[]).is_none());
        let f = FiveNumber::of(&[1.0, f64::INFINITY, f64::INFINITY]).unwrap();
        assert!(f.median.is_infinite());
    }

    #[test]
    fn human_trace_preserves_length_and_schema() {
        let log = synthetic(&[0.2; 17], 30.0, Outcome::Finished);
        let trace = record_human_reference(&log).unwrap();
        assert_eq!(trace.len(), 17);
        assert_eq!(trace.origin, Origin::Human);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        trace.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 18);
    }

    #[test]
    fn episode_csv_has_summary_row() {
        let logs: Vec<_> = (0..3).map(|_| synthetic(&[0.2; 8], 150.0, Outcome::Finished)).collect();
        let m = compute_metrics(&logs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.write_episode_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 1);
        assert!(text.lines().last().unwrap().starts_with("summary"));
    }
}
