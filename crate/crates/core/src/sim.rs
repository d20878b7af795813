//! Longitudinal world model: one straight lane, the ego vehicle, two scripted
//! front vehicles and a scripted follower.
//!
//! Everything here is deterministic. A world is a pure function of its
//! [`WorldConfig`], the reset seed and the sequence of ego actions.

use std::fmt;
use std::path::Path;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vehicle roles on the ego lane, ordered back to front as `b, ego, f1, f2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ego,
    F1,
    F2,
    B,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Ego, Role::F1, Role::F2, Role::B];

    /// Slot of this role inside [`WorldState::vehicles`].
    pub const fn index(self) -> usize {
        match self {
            Role::Ego => 0,
            Role::F1 => 1,
            Role::F2 => 2,
            Role::B => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Ego => "ego",
            Role::F1 => "f1",
            Role::F2 => "f2",
            Role::B => "b",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where and how fast a vehicle starts, relative to the route start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnPoint {
    pub role: Role,
    pub offset_m: f64,
    pub speed_mps: f64,
}

/// World parameters. Every field can be overridden from a key-value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub route_length_m: f64,
    pub dt: f64,
    pub t_max: u32,
    pub t_bound: u32,
    pub min_start_distance_m: f64,
    pub spawn_positions: Vec<SpawnPoint>,
    pub front_brake_period: u32,
    pub front_brake_duty: f64,
    pub front_cruise_speed: f64,
    /// Upper bound (exclusive) of the per-episode random shift of each front
    /// vehicle's braking wave, in steps. Zero disables the shift.
    pub front_phase_jitter: u32,
    pub seed: u64,
    pub vehicle_length_m: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub v_cap: f64,
    /// Bumper gap below which scripted vehicles brake for the vehicle ahead.
    pub follow_gap_m: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            route_length_m: 150.0,
            dt: 0.05,
            t_max: 7500,
            t_bound: 500,
            min_start_distance_m: 3.0,
            spawn_positions: vec![
                SpawnPoint { role: Role::B, offset_m: -12.0, speed_mps: 0.0 },
                SpawnPoint { role: Role::Ego, offset_m: 0.0, speed_mps: 0.0 },
                SpawnPoint { role: Role::F1, offset_m: 15.0, speed_mps: 0.0 },
                SpawnPoint { role: Role::F2, offset_m: 30.0, speed_mps: 0.0 },
            ],
            front_brake_period: 200,
            front_brake_duty: 0.3,
            front_cruise_speed: 5.0,
            front_phase_jitter: 50,
            seed: 0,
            vehicle_length_m: 4.5,
            max_accel: 3.5,
            max_decel: 3.5,
            v_cap: 20.0,
            follow_gap_m: 6.0,
        }
    }
}

impl WorldConfig {
    /// Parses a flat `key = value` TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: WorldConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("route_length_m", self.route_length_m),
            ("dt", self.dt),
            ("vehicle_length_m", self.vehicle_length_m),
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
            ("v_cap", self.v_cap),
            ("front_cruise_speed", self.front_cruise_speed),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if self.t_bound == 0 || self.t_max < self.t_bound {
            return Err(Error::Config(format!(
                "need t_max >= t_bound > 0, got t_max={} t_bound={}",
                self.t_max, self.t_bound
            )));
        }
        if !(self.front_brake_duty > 0.0 && self.front_brake_duty < 1.0) {
            return Err(Error::Config("front_brake_duty must lie in (0,1)".into()));
        }
        if self.front_brake_period == 0 {
            return Err(Error::Config("front_brake_period must be > 0".into()));
        }
        if self.min_start_distance_m < 0.0 || self.follow_gap_m < 0.0 {
            return Err(Error::Config("distances must be non-negative".into()));
        }
        self.spawn_layout().map(|_| ())
    }

    /// Spawn points indexed by [`Role::index`], checked for completeness and
    /// ordering `b < ego < f1 < f2` with no overlapping vehicles.
    pub fn spawn_layout(&self) -> Result<[SpawnPoint; 4]> {
        let mut slots: [Option<SpawnPoint>; 4] = [None; 4];
        for sp in &self.spawn_positions {
            if !sp.offset_m.is_finite() || !sp.speed_mps.is_finite() || sp.speed_mps < 0.0 {
                return Err(Error::Config(format!("bad spawn point for {}", sp.role)));
            }
            if sp.speed_mps > self.v_cap {
                return Err(Error::Config(format!("spawn speed of {} exceeds v_cap", sp.role)));
            }
            let slot = &mut slots[sp.role.index()];
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate spawn point for {}", sp.role)));
            }
            *slot = Some(*sp);
        }
        let mut layout = [SpawnPoint { role: Role::Ego, offset_m: 0.0, speed_mps: 0.0 }; 4];
        for role in Role::ALL {
            layout[role.index()] = slots[role.index()]
                .ok_or_else(|| Error::Config(format!("missing spawn point for {role}")))?;
        }
        let lane_order = [Role::B, Role::Ego, Role::F1, Role::F2];
        for pair in lane_order.windows(2) {
            let (back, front) = (layout[pair[0].index()], layout[pair[1].index()]);
            if front.offset_m - back.offset_m <= self.vehicle_length_m {
                return Err(Error::Config(format!(
                    "spawn of {} and {} overlap or are out of lane order",
                    back.role, front.role
                )));
            }
        }
        Ok(layout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub role: Role,
    pub position_m: f64,
    pub velocity_mps: f64,
    pub length_m: f64,
    pub last_action: f64,
}

impl VehicleState {
    pub fn rear(&self) -> f64 {
        self.position_m - 0.5 * self.length_m
    }

    pub fn front(&self) -> f64 {
        self.position_m + 0.5 * self.length_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusKind {
    Running,
    Finished,
    Collided,
    Timeout,
    Stalled,
}

impl StatusKind {
    pub fn is_failure(self) -> bool {
        matches!(self, StatusKind::Collided | StatusKind::Timeout | StatusKind::Stalled)
    }

    pub fn name(self) -> &'static str {
        match self {
            StatusKind::Running => "running",
            StatusKind::Finished => "finished",
            StatusKind::Collided => "collided",
            StatusKind::Timeout => "timeout",
            StatusKind::Stalled => "stalled",
        }
    }
}

impl fmt::Display for StatusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Episode status; `t_terminal` is set exactly when the kind is not `Running`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub kind: StatusKind,
    pub t_terminal: Option<u32>,
}

impl EpisodeStatus {
    pub const RUNNING: EpisodeStatus = EpisodeStatus { kind: StatusKind::Running, t_terminal: None };

    pub fn terminal(kind: StatusKind, t: u32) -> Self {
        debug_assert!(kind != StatusKind::Running);
        EpisodeStatus { kind, t_terminal: Some(t) }
    }

    pub fn is_terminal(&self) -> bool {
        self.kind != StatusKind::Running
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: u32,
    /// Indexed by [`Role::index`].
    pub vehicles: [VehicleState; 4],
    pub status: EpisodeStatus,
    /// Ego start position, for the stall check.
    pub origin_m: f64,
    /// Per-episode shift of the braking wave of `f1` and `f2`, in steps.
    pub brake_phase: [u32; 2],
}

impl WorldState {
    pub fn vehicle(&self, role: Role) -> &VehicleState {
        &self.vehicles[role.index()]
    }

    pub fn ego(&self) -> &VehicleState {
        self.vehicle(Role::Ego)
    }

    pub fn traveled_m(&self) -> f64 {
        self.ego().position_m - self.origin_m
    }

    /// Bumper-to-bumper gap from the ego to the nearest vehicle ahead of it.
    pub fn front_gap_m(&self) -> Option<f64> {
        let ego = self.ego();
        self.vehicles
            .iter()
            .filter(|v| v.role != Role::Ego && v.position_m > ego.position_m)
            .map(|v| v.rear() - ego.front())
            .min_by(f64::total_cmp)
    }
}

/// Damps the raw action with the previous applied action.
///
/// A sign change drops the history term; `sgn(0)` counts as positive.
pub fn apply_inertia<T: Float>(a_tilde: T, a_prev: T) -> Result<T> {
    let one = T::one();
    for (name, v) in [("a_tilde", a_tilde), ("a_prev", a_prev)] {
        if !(v >= -one && v <= one) {
            return Err(Error::Domain(format!(
                "{name} = {} outside [-1, 1]",
                v.to_f64().unwrap_or(f64::NAN)
            )));
        }
    }
    let nine = T::from(0.9).unwrap();
    let tenth = T::from(0.1).unwrap();
    let zero = T::zero();
    if (a_tilde >= zero) != (a_prev >= zero) {
        Ok(nine * a_tilde)
    } else {
        Ok(nine * a_tilde + tenth * a_prev)
    }
}

/// Point-mass update: throttle scales `max_accel`, brake scales `max_decel`,
/// speed is clamped to `[0, v_cap]` and integrated semi-implicitly.
pub fn step_ego(state: &VehicleState, a: f64, dt: f64, config: &WorldConfig) -> Result<VehicleState> {
    if !(-1.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("action {a} outside [-1, 1]")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    let gain = if a >= 0.0 { a * config.max_accel } else { a * config.max_decel };
    let velocity = (state.velocity_mps + gain * dt).clamp(0.0, config.v_cap);
    Ok(VehicleState {
        velocity_mps: velocity,
        position_m: state.position_m + velocity * dt,
        last_action: a,
        ..*state
    })
}

const FRONT_BRAKE_CMD: f64 = -0.5;
const SPEED_GAIN: f64 = 0.5;

fn cruise_command(v: f64, target: f64) -> f64 {
    (SPEED_GAIN * (target - v)).clamp(FRONT_BRAKE_CMD, 1.0)
}

/// Full braking when the distance needed to shed the closing speed eats into
/// the follow gap.
fn must_yield(own: &VehicleState, lead: &VehicleState, config: &WorldConfig) -> bool {
    let gap = lead.rear() - own.front();
    let closing = (own.velocity_mps.powi(2) - lead.velocity_mps.powi(2)).max(0.0) / (2.0 * config.max_decel);
    gap < config.follow_gap_m + closing + 2.0 * own.velocity_mps * config.dt
}

/// Command of a scripted vehicle at the world's current step.
///
/// Front vehicles follow a braking square wave (`f2` half a period behind
/// `f1`); `f1` additionally yields to `f2`. The follower `b` keeps its gap to
/// the ego and otherwise cruises.
pub fn front_vehicle_controller(world: &WorldState, role: Role, config: &WorldConfig) -> Result<f64> {
    let me = world.vehicle(role);
    let braking_phase = |offset: u32| {
        let period = config.front_brake_period;
        let phase = (world.t.wrapping_add(offset)) % period;
        (phase as f64) < config.front_brake_duty * period as f64
    };
    match role {
        Role::Ego => Err(Error::Contract("the ego vehicle is not scripted".into())),
        Role::F1 | Role::F2 => {
            if role == Role::F1 && must_yield(me, world.vehicle(Role::F2), config) {
                return Ok(-1.0);
            }
            let offset = if role == Role::F1 {
                world.brake_phase[0]
            } else {
                world.brake_phase[1] + config.front_brake_period / 2
            };
            if braking_phase(offset) {
                Ok(FRONT_BRAKE_CMD)
            } else {
                Ok(cruise_command(me.velocity_mps, config.front_cruise_speed).max(0.0))
            }
        }
        Role::B => {
            if must_yield(me, world.ego(), config) {
                Ok(-1.0)
            } else {
                Ok(cruise_command(me.velocity_mps, config.front_cruise_speed))
            }
        }
    }
}

/// Strict overlap of any two vehicle intervals; touching does not count.
pub fn detect_collision(world: &WorldState) -> bool {
    let v = &world.vehicles;
    (0..v.len()).any(|i| (i + 1..v.len()).any(|j| v[i].rear() < v[j].front() && v[j].rear() < v[i].front()))
}

/// Status implied by the current world. Precedence on simultaneous
/// triggers: collided, finished, stalled, timeout.
pub fn check_termination(world: &WorldState, config: &WorldConfig) -> EpisodeStatus {
    let t = world.t;
    let kind = if detect_collision(world) {
        StatusKind::Collided
    } else if world.ego().position_m >= config.route_length_m {
        StatusKind::Finished
    } else if t >= config.t_bound && world.traveled_m() < config.min_start_distance_m {
        StatusKind::Stalled
    } else if t >= config.t_max {
        StatusKind::Timeout
    } else {
        return EpisodeStatus::RUNNING;
    };
    EpisodeStatus::terminal(kind, t)
}

/// Fresh world at `t = 0`. The seed only draws the braking-wave shifts.
pub fn reset(config: &WorldConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let layout = config.spawn_layout()?;
    let vehicles = layout.map(|sp| VehicleState {
        role: sp.role,
        position_m: sp.offset_m,
        velocity_mps: sp.speed_mps,
        length_m: config.vehicle_length_m,
        last_action: 0.0,
    });
    let brake_phase = if config.front_phase_jitter == 0 {
        [0, 0]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [
            rng.random_range(0..config.front_phase_jitter),
            rng.random_range(0..config.front_phase_jitter),
        ]
    };
    Ok(WorldState {
        t: 0,
        origin_m: vehicles[Role::Ego.index()].position_m,
        vehicles,
        status: EpisodeStatus::RUNNING,
        brake_phase,
    })
}

/// Advances the world one step with the ego's raw action and returns the
/// applied (inertia-filtered) action.
pub fn advance(world: &mut WorldState, a_tilde: f64, config: &WorldConfig) -> Result<f64> {
    if world.status.is_terminal() {
        return Err(Error::Contract(format!(
            "step on a terminated episode ({})",
            world.status.kind
        )));
    }
    let ego = *world.ego();
    let applied = apply_inertia(a_tilde, ego.last_action)?;
    let mut next = world.vehicles;
    next[Role::Ego.index()] = step_ego(&ego, applied, config.dt, config)?;
    for role in [Role::F1, Role::F2, Role::B] {
        let cmd = front_vehicle_controller(world, role, config)?;
        next[role.index()] = step_ego(world.vehicle(role), cmd, config.dt, config)?;
    }
    world.vehicles = next;
    world.t += 1;
    world.status = check_termination(world, config);
    Ok(applied)
}
