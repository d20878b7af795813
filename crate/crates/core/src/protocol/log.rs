//! Episode logs and bit-exact replay.
//!
//! A log is a pair of files sharing a stem:
//!
//! * `<stem>.jsonl` holds one JSON object per line: a `header`, one `step`
//!   per transition, and an `end` record once the episode is over.
//! * `<stem>.obs` holds the observations, fixed-size little-endian records
//!   referenced by each step's `obs` index: 100 vision bytes, six `f64`
//!   driving values and one byte for the uncertainty channel (bit 7 set when
//!   present, bits 0-3 the one-hot).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{CaseSpec, DrivingEnv, StepRecord};
use crate::error::{Error, Result};
use crate::observation::{Observation, Scenario, NON_VISUAL_LEN, UNCERTAINTY_LEN};
use crate::perception::{SemanticGrid, GRID_CELLS};
use crate::reward::RewardParams;
use crate::sim::{StatusKind, WorldConfig};

pub const LOG_FORMAT: u32 = 1;
const OBS_MAGIC: &[u8; 8] = b"UDRVOBS1";
const OBS_RECORD: usize = GRID_CELLS + 8 * NON_VISUAL_LEN + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Agent,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub format: u32,
    pub origin: Origin,
    pub scenario: Scenario,
    pub case: CaseSpec,
    pub world_seed: u64,
    pub world: WorldConfig,
    pub reward: RewardParams<f64>,
    pub episode: u64,
    /// Where the acting policy came from, if an agent drove.
    pub policy: Option<String>,
}

/// Final state of a logged episode. `Aborted` marks a session that ended
/// before the world terminated (teleop disconnect).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Finished,
    Collided,
    Timeout,
    Stalled,
    Aborted,
}

impl Outcome {
    pub fn from_status(kind: StatusKind) -> Option<Outcome> {
        match kind {
            StatusKind::Running => None,
            StatusKind::Finished => Some(Outcome::Finished),
            StatusKind::Collided => Some(Outcome::Collided),
            StatusKind::Timeout => Some(Outcome::Timeout),
            StatusKind::Stalled => Some(Outcome::Stalled),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Finished => "finished",
            Outcome::Collided => "collided",
            Outcome::Timeout => "timeout",
            Outcome::Stalled => "stalled",
            Outcome::Aborted => "aborted",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub outcome: Outcome,
    pub t_terminal: Option<u32>,
    pub steps: u32,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Line {
    Header(EpisodeHeader),
    Step(StepRecord),
    End(EpisodeEnd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
    /// Observation each action was chosen on, indexed by `StepRecord::obs`.
    pub observations: Vec<Observation>,
    pub end: Option<EpisodeEnd>,
}

impl EpisodeLog {
    pub fn new(header: EpisodeHeader) -> Self {
        Self { header, steps: Vec::new(), observations: Vec::new(), end: None }
    }

    pub fn push(&mut self, observation: Observation, record: StepRecord) {
        self.observations.push(observation);
        self.steps.push(record);
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Closes the log with the given outcome.
    pub fn finish(&mut self, outcome: Outcome, t_terminal: Option<u32>) {
        self.end = Some(EpisodeEnd {
            outcome,
            t_terminal,
            steps: self.steps.len() as u32,
            cumulative_reward: self.cumulative_reward(),
        });
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.end.map(|e| e.outcome)
    }

    pub fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{stem}.jsonl")), dir.join(format!("{stem}.obs")))
    }

    /// Writes `<stem>.jsonl` and `<stem>.obs` into `dir`; returns the jsonl path.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let (jsonl, obs) = Self::paths(dir, stem);
        let mut out = BufWriter::new(File::create(&jsonl).map_err(|e| Error::io(&jsonl, e))?);
        let mut emit = |line: &Line| -> Result<()> {
            serde_json::to_writer(&mut out, line).map_err(|e| Error::Malformed { what: "episode log", detail: e.to_string() })?;
            out.write_all(b"\n").map_err(|e| Error::io(&jsonl, e))
        };
        emit(&Line::Header(self.header.clone()))?;
        for s in &self.steps {
            emit(&Line::Step(*s))?;
        }
        if let Some(end) = self.end {
            emit(&Line::End(end))?;
        }
        out.flush().map_err(|e| Error::io(&jsonl, e))?;
        std::fs::write(&obs, encode_observations(&self.observations)?).map_err(|e| Error::io(&obs, e))?;
        Ok(jsonl)
    }

    /// Reads a log from its `.jsonl` path; the `.obs` sidecar is optional.
    pub fn read(jsonl: &Path) -> Result<Self> {
        let malformed = |detail: String| Error::Malformed { what: "episode log", detail };
        let file = File::open(jsonl).map_err(|e| Error::io(jsonl, e))?;
        let mut header = None;
        let mut steps = Vec::new();
        let mut end = None;
        for (no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(jsonl, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| malformed(format!("line {}: {e}", no + 1)))?;
            match (parsed, &header, &end) {
                (Line::Header(h), None, _) => header = Some(h),
                (Line::Step(s), Some(_), None) => steps.push(s),
                (Line::End(e), Some(_), None) => end = Some(e),
                _ => return Err(malformed(format!("line {}: record out of order", no + 1))),
            }
        }
        let header = header.ok_or_else(|| malformed("no header".into()))?;
        if header.format != LOG_FORMAT {
            return Err(malformed(format!("unsupported format {}", header.format)));
        }
        let obs_path = jsonl.with_extension("obs");
        let observations = if obs_path.exists() {
            let bytes = std::fs::read(&obs_path).map_err(|e| Error::io(&obs_path, e))?;
            decode_observations(&bytes)?
        } else {
            Vec::new()
        };
        Ok(Self { header, steps, observations, end })
    }
}

fn encode_observations(observations: &[Observation]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(OBS_MAGIC.len() + observations.len() * OBS_RECORD);
    out.extend_from_slice(OBS_MAGIC);
    for o in observations {
        if o.vision.len() != GRID_CELLS {
            return Err(Error::Contract("observation vision must be 100 bytes".into()));
        }
        out.extend_from_slice(&o.vision);
        for v in o.non_visual {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let flag = match o.uncertainty {
            None => 0u8,
            Some(u) => u.iter().enumerate().fold(0x80u8, |acc, (i, b)| acc | ((b & 1) << i)),
        };
        out.push(flag);
    }
    Ok(out)
}

fn decode_observations(bytes: &[u8]) -> Result<Vec<Observation>> {
    let bad = |d: &str| Error::Malformed { what: "observation file", detail: d.to_string() };
    let body = bytes.strip_prefix(OBS_MAGIC.as_slice()).ok_or_else(|| bad("missing magic"))?;
    if body.len() % OBS_RECORD != 0 {
        return Err(bad("truncated record"));
    }
    body.chunks_exact(OBS_RECORD)
        .map(|rec| {
            let (vision, rest) = rec.split_at(GRID_CELLS);
            let mut non_visual = [0.0; NON_VISUAL_LEN];
            for (i, v) in non_visual.iter_mut().enumerate() {
                *v = f64::from_le_bytes(rest[8 * i..8 * i + 8].try_into().expect("8 bytes"));
            }
            let flag = rest[8 * NON_VISUAL_LEN];
            let uncertainty = if flag & 0x80 != 0 {
                let mut u = [0u8; UNCERTAINTY_LEN];
                for (i, b) in u.iter_mut().enumerate() {
                    *b = (flag >> i) & 1;
                }
                Some(u)
            } else if flag == 0 {
                None
            } else {
                return Err(bad("bad uncertainty flag"));
            };
            Ok(Observation { vision: vision.to_vec(), non_visual, uncertainty })
        })
        .collect()
}

/// Result of a successful replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    pub outcome: Option<Outcome>,
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

fn same_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => same(a, b),
        (None, None) => true,
        _ => false,
    }
}

/// Re-simulates a log from its header and recorded raw actions, checking
/// every recorded quantity bit for bit. `on_grid` sees the perceived grid
/// before each step.
pub fn replay_with(log: &EpisodeLog, mut on_grid: impl FnMut(usize, &SemanticGrid) -> Result<()>) -> Result<ReplayReport> {
    let h = &log.header;
    let mut env = DrivingEnv::new(h.world.clone(), h.reward, h.scenario)?;
    env.reset(h.world_seed, h.case)?;
    let check_obs = !log.observations.is_empty();
    for (i, rec) in log.steps.iter().enumerate() {
        let diverge = |detail: String| Error::Divergence { step: i, detail };
        on_grid(i, &env.perceived_grid())?;
        if check_obs {
            let logged = log
                .observations
                .get(rec.obs as usize)
                .ok_or_else(|| diverge(format!("observation index {} out of range", rec.obs)))?;
            let now = env.observation();
            let non_visual_same = logged.non_visual.iter().zip(&now.non_visual).all(|(a, b)| same(*a, *b));
            if logged.vision != now.vision || !non_visual_same || logged.uncertainty != now.uncertainty {
                return Err(diverge("observation differs".into()));
            }
        }
        let tr = env.step(rec.a_tilde, rec.obs).map_err(|e| diverge(format!("step failed: {e}")))?;
        let got = tr.record;
        let mut mismatches = Vec::new();
        if got.t != rec.t {
            mismatches.push(format!("t {} vs {}", got.t, rec.t));
        }
        if got.case != rec.case {
            mismatches.push(format!("case {} vs {}", got.case, rec.case));
        }
        for (name, a, b) in [
            ("a", got.a, rec.a),
            ("reward", got.reward, rec.reward),
            ("ego_position", got.ego_position, rec.ego_position),
            ("ego_velocity", got.ego_velocity, rec.ego_velocity),
        ] {
            if !same(a, b) {
                mismatches.push(format!("{name} {a:?} vs logged {b:?}"));
            }
        }
        if !same_opt(got.front_gap, rec.front_gap) {
            mismatches.push(format!("front_gap {:?} vs logged {:?}", got.front_gap, rec.front_gap));
        }
        if !mismatches.is_empty() {
            return Err(diverge(mismatches.join("; ")));
        }
        if tr.status.is_terminal() && i + 1 != log.steps.len() {
            return Err(diverge("world terminated before the log ended".into()));
        }
    }
    let outcome = Outcome::from_status(env.status().kind);
    if let Some(end) = log.end {
        let expected = if end.outcome == Outcome::Aborted { None } else { Some(end.outcome) };
        if outcome != expected {
            return Err(Error::Divergence {
                step: log.steps.len(),
                detail: format!("outcome {outcome:?} vs logged {}", end.outcome),
            });
        }
        if !same(end.cumulative_reward, log.cumulative_reward()) || end.steps as usize != log.steps.len() {
            return Err(Error::Divergence { step: log.steps.len(), detail: "end record totals differ".into() });
        }
    }
    Ok(ReplayReport { steps: log.steps.len(), outcome: log.end.map(|e| e.outcome) })
}

pub fn replay_episode(log: &EpisodeLog) -> Result<ReplayReport> {
    replay_with(log, |_, _| Ok(()))
}
