//! Bird's-eye-view semantic grid of the ego lane and the vehicle-removal
//! perturbations applied to it.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Role, WorldState};

pub const GRID_COLS: usize = 4;
pub const GRID_ROWS: usize = 25;
pub const GRID_CELLS: usize = GRID_COLS * GRID_ROWS;

/// Window covered by the grid, measured from the ego's center.
pub const VIEW_AHEAD_M: f64 = 50.0;
pub const VIEW_BEHIND_M: f64 = 12.5;
pub const ROW_DEPTH_M: f64 = (VIEW_AHEAD_M + VIEW_BEHIND_M) / GRID_ROWS as f64;

/// Columns covered by a vehicle; the outer columns are lane markings.
const LANE_COLS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Road = 0,
    LaneMarking = 1,
    EgoVehicle = 2,
    OtherVehicle = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Road, Class::LaneMarking, Class::EgoVehicle, Class::OtherVehicle];

    pub fn from_id(id: u8) -> Result<Class> {
        Class::ALL
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unknown class id {id}")))
    }

    /// Static scene class of a column.
    pub fn background(col: usize) -> Class {
        if col == 0 || col == GRID_COLS - 1 {
            Class::LaneMarking
        } else {
            Class::Road
        }
    }
}

/// 25 rows by 4 columns of class ids. Row 0 is farthest ahead.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticGrid {
    cells: [[Class; GRID_COLS]; GRID_ROWS],
}

impl fmt::Debug for SemanticGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SemanticGrid")?;
        for row in &self.cells {
            let line: String = row
                .iter()
                .map(|c| match c {
                    Class::Road => '.',
                    Class::LaneMarking => '|',
                    Class::EgoVehicle => 'E',
                    Class::OtherVehicle => 'V',
                })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl Default for SemanticGrid {
    fn default() -> Self {
        Self::background()
    }
}

impl SemanticGrid {
    /// Empty road.
    pub fn background() -> Self {
        let row: [Class; GRID_COLS] = std::array::from_fn(Class::background);
        SemanticGrid { cells: [row; GRID_ROWS] }
    }

    pub fn get(&self, row: usize, col: usize) -> Class {
        self.cells[row][col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: Class) {
        self.cells[row][col] = class;
    }

    pub fn rows(&self) -> &[[Class; GRID_COLS]; GRID_ROWS] {
        &self.cells
    }

    /// Row-major class ids, one byte per cell.
    pub fn to_bytes(&self) -> [u8; GRID_CELLS] {
        let mut out = [0u8; GRID_CELLS];
        for (i, c) in self.cells.iter().flatten().enumerate() {
            out[i] = *c as u8;
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != GRID_CELLS {
            return Err(Error::Contract(format!("grid needs {GRID_CELLS} bytes, got {}", bytes.len())));
        }
        let mut grid = SemanticGrid::background();
        for (i, b) in bytes.iter().enumerate() {
            grid.cells[i / GRID_COLS][i % GRID_COLS] = Class::from_id(*b)?;
        }
        Ok(grid)
    }

    pub fn count(&self, class: Class) -> usize {
        self.cells.iter().flatten().filter(|c| **c == class).count()
    }
}

/// Rows whose longitudinal band strictly overlaps the vehicle's interval,
/// or `None` when the vehicle is outside the window.
pub fn occupied_rows(world: &WorldState, role: Role) -> Option<std::ops::RangeInclusive<usize>> {
    let ego = world.ego().position_m;
    let v = world.vehicle(role);
    let lo = v.rear() - ego;
    let hi = v.front() - ego;
    // row r spans (AHEAD - (r+1)*D, AHEAD - r*D)
    let first = ((VIEW_AHEAD_M - hi) / ROW_DEPTH_M).floor();
    let last = ((VIEW_AHEAD_M - lo) / ROW_DEPTH_M).ceil() - 1.0;
    let first = first.max(0.0);
    let last = last.min((GRID_ROWS - 1) as f64);
    if !(first <= last) {
        return None;
    }
    Some(first as usize..=last as usize)
}

fn paint(grid: &mut SemanticGrid, world: &WorldState, visible: impl Fn(Role) -> bool) {
    for role in [Role::F1, Role::F2, Role::B] {
        if !visible(role) {
            continue;
        }
        if let Some(rows) = occupied_rows(world, role) {
            for r in rows {
                for c in LANE_COLS {
                    grid.cells[r][c] = Class::OtherVehicle;
                }
            }
        }
    }
    // ego is painted last and is never overwritten
    if let Some(rows) = occupied_rows(world, Role::Ego) {
        for r in rows {
            for c in LANE_COLS {
                grid.cells[r][c] = Class::EgoVehicle;
            }
        }
    }
}

/// Renders the ground-truth world into the ego-centred semantic grid.
pub fn render_bev(world: &WorldState) -> SemanticGrid {
    let mut grid = SemanticGrid::background();
    paint(&mut grid, world, |_| true);
    grid
}

/// Visibility pattern over `b, ego, f1, f2`; `V` visible, `X` removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PerturbationCase {
    /// Nearest front vehicle removed.
    #[serde(rename = "VEXV")]
    Vexv,
    /// Follower removed.
    #[serde(rename = "XEVV")]
    Xevv,
    /// Both front vehicles removed.
    #[serde(rename = "VEXX")]
    Vexx,
    /// Everything but the ego removed.
    #[serde(rename = "XEXX")]
    Xexx,
    /// Correct perception.
    #[serde(rename = "VEVV")]
    Vevv,
}

impl PerturbationCase {
    pub const ALL: [PerturbationCase; 5] = [
        PerturbationCase::Vexv,
        PerturbationCase::Xevv,
        PerturbationCase::Vexx,
        PerturbationCase::Xexx,
        PerturbationCase::Vevv,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PerturbationCase::Vexv => "VEXV",
            PerturbationCase::Xevv => "XEVV",
            PerturbationCase::Vexx => "VEXX",
            PerturbationCase::Xexx => "XEXX",
            PerturbationCase::Vevv => "VEVV",
        }
    }

    pub fn removes(self, role: Role) -> bool {
        use PerturbationCase::*;
        match role {
            Role::Ego => false,
            Role::F1 => matches!(self, Vexv | Vexx | Xexx),
            Role::F2 => matches!(self, Vexx | Xexx),
            Role::B => matches!(self, Xevv | Xexx),
        }
    }
}

impl fmt::Display for PerturbationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PerturbationCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PerturbationCase::ALL
            .into_iter()
            .find(|c| c.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Contract(format!("unknown perturbation case {s:?}")))
    }
}

/// Removes the vehicles hidden by `case` from a grid rendered from `world`.
///
/// Cells of removed vehicles get their static background back unless a
/// visible vehicle also covers them.
pub fn apply_perturbation(grid: &SemanticGrid, case: PerturbationCase, world: &WorldState) -> SemanticGrid {
    if case == PerturbationCase::Vevv {
        return grid.clone();
    }
    let mut kept = SemanticGrid::background();
    paint(&mut kept, world, |role| !case.removes(role));
    let mut out = grid.clone();
    for role in [Role::F1, Role::F2, Role::B] {
        if !case.removes(role) {
            continue;
        }
        if let Some(rows) = occupied_rows(world, role) {
            for r in rows {
                for c in LANE_COLS {
                    if out.cells[r][c] == Class::OtherVehicle {
                        out.cells[r][c] = kept.cells[r][c];
                    }
                }
            }
        }
    }
    out
}

pub const MPC_DURATIONS: [u32; 5] = [50, 100, 150, 200, 400];

/// Randomized sequence of perturbation cases used for the mixed case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcSchedule {
    pub segments: Vec<(PerturbationCase, u32)>,
    pub seed: u64,
}

impl MpcSchedule {
    pub fn len_steps(&self) -> u64 {
        self.segments.iter().map(|(_, d)| u64::from(*d)).sum()
    }
}

/// Draws segments until their total length reaches `horizon`. Case and
/// duration are independent uniform draws with replacement.
pub fn sample_mpc_schedule(seed: u64, horizon: u64) -> Result<MpcSchedule> {
    if horizon == 0 {
        return Err(Error::Contract("schedule horizon must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut total = 0u64;
    while total < horizon {
        let case = PerturbationCase::ALL[rng.random_range(0..PerturbationCase::ALL.len())];
        let duration = MPC_DURATIONS[rng.random_range(0..MPC_DURATIONS.len())];
        total += u64::from(duration);
        segments.push((case, duration));
    }
    Ok(MpcSchedule { segments, seed })
}

/// Case of the segment containing `t`; segments are left-inclusive.
pub fn current_case(schedule: &MpcSchedule, t: u64) -> Result<PerturbationCase> {
    let mut end = 0u64;
    for (case, duration) in &schedule.segments {
        end += u64::from(*duration);
        if t < end {
            return Ok(*case);
        }
    }
    Err(Error::Range(format!("step {t} beyond schedule of {end} steps")))
}

/// Writes a binary PGM (P5) of the grid's gray image, one pixel per cell.
pub fn write_pgm(grid: &SemanticGrid, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut body = format!("P5\n{GRID_COLS} {GRID_ROWS}\n255\n").into_bytes();
    body.extend(grid.cells.iter().flatten().map(|c| crate::observation::grayscale(*c)));
    file.write_all(&body).map_err(|e| Error::io(path, e))
}
