//! Agent-facing observation: gray vision vector, driving state and the
//! optional uncertainty one-hot.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{Class, PerturbationCase, SemanticGrid, GRID_CELLS, GRID_COLS};
use crate::scalar::Scalar;
use crate::sim::{WorldConfig, WorldState};

pub const NON_VISUAL_LEN: usize = 6;
pub const UNCERTAINTY_LEN: usize = 4;

/// Train/test regime crossing perception quality with informedness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Scenario {
    id: u8,
}

impl Scenario {
    /// Correct perception, no uncertainty channel.
    pub const CORRECT: Scenario = Scenario { id: 1 };
    /// Perturbed perception, no uncertainty channel.
    pub const PERTURBED: Scenario = Scenario { id: 2 };
    /// Perturbed perception with the uncertainty channel.
    pub const INFORMED: Scenario = Scenario { id: 3 };
    /// Correct perception with an always-zero uncertainty channel (testing only).
    pub const CORRECT_INFORMED: Scenario = Scenario { id: 4 };

    pub fn from_id(id: u8) -> Result<Scenario> {
        match id {
            1..=4 => Ok(Scenario { id }),
            _ => Err(Error::Config(format!("scenario must be 1..=4, got {id}"))),
        }
    }

    pub fn id(self) -> u8 {
        self.id
    }

    pub fn perturbed(self) -> bool {
        matches!(self.id, 2 | 3)
    }

    pub fn informed(self) -> bool {
        matches!(self.id, 3 | 4)
    }

    pub fn observation_len(self) -> usize {
        GRID_CELLS + NON_VISUAL_LEN + if self.informed() { UNCERTAINTY_LEN } else { 0 }
    }
}

impl TryFrom<u8> for Scenario {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Scenario::from_id(id)
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.id
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario {}", self.id)
    }
}

/// Gray level of a semantic class.
pub fn grayscale(class: Class) -> u8 {
    match class {
        Class::Road => 90,
        Class::LaneMarking => 160,
        Class::OtherVehicle => 30,
        Class::EgoVehicle => 220,
    }
}

/// Inverse of [`grayscale`].
pub fn class_of_gray(gray: u8) -> Option<Class> {
    Class::ALL.into_iter().find(|c| grayscale(*c) == gray)
}

/// One-hot of the active perturbation, or `None` for uninformed scenarios.
///
/// Scenarios with correct perception always report the zero vector.
pub fn encode_uncertainty(case: PerturbationCase, scenario: Scenario) -> Option<[u8; UNCERTAINTY_LEN]> {
    if !scenario.informed() {
        return None;
    }
    let mut code = [0u8; UNCERTAINTY_LEN];
    if scenario.perturbed() {
        let slot = match case {
            PerturbationCase::Vexv => Some(0),
            PerturbationCase::Xevv => Some(1),
            PerturbationCase::Vexx => Some(2),
            PerturbationCase::Xexx => Some(3),
            PerturbationCase::Vevv => None,
        };
        if let Some(i) = slot {
            code[i] = 1;
        }
    }
    Some(code)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub vision: Vec<u8>,
    /// throttle, brake, velocity, normalized velocity, orientation, lane offset
    pub non_visual: [f64; NON_VISUAL_LEN],
    pub uncertainty: Option<[u8; UNCERTAINTY_LEN]>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.vision.len() + NON_VISUAL_LEN + self.uncertainty.map_or(0, |u| u.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Network input: vision scaled to `[0, 1]`, everything else as is.
    pub fn write_input<T: Scalar>(&self, out: &mut [T]) -> Result<()> {
        if out.len() != self.len() {
            return Err(Error::Contract(format!(
                "input buffer of {} for observation of {}",
                out.len(),
                self.len()
            )));
        }
        let scale = T::lit(1.0 / 255.0);
        let (vision, rest) = out.split_at_mut(self.vision.len());
        for (o, v) in vision.iter_mut().zip(&self.vision) {
            *o = T::lit(f64::from(*v)) * scale;
        }
        let (non_visual, unc) = rest.split_at_mut(NON_VISUAL_LEN);
        for (o, v) in non_visual.iter_mut().zip(&self.non_visual) {
            *o = T::lit(*v);
        }
        if let Some(u) = self.uncertainty {
            for (o, v) in unc.iter_mut().zip(u) {
                *o = T::lit(f64::from(v));
            }
        }
        Ok(())
    }

    pub fn to_input<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.write_input(&mut out).expect("sized buffer");
        out
    }

    /// Reshapes the vision vector back into the grid it came from.
    pub fn vision_grid(&self) -> Result<SemanticGrid> {
        if self.vision.len() != GRID_CELLS {
            return Err(Error::Contract(format!("vision of {} values", self.vision.len())));
        }
        let mut grid = SemanticGrid::background();
        for (i, g) in self.vision.iter().enumerate() {
            let class = class_of_gray(*g).ok_or_else(|| Error::Contract(format!("gray value {g} has no class")))?;
            grid.set(i / GRID_COLS, i % GRID_COLS, class);
        }
        Ok(grid)
    }
}

/// Builds `o_t` from a (possibly perturbed) grid and the true driving state.
///
/// `a_prev` is the applied action of the previous step.
pub fn assemble_observation(
    grid: &SemanticGrid,
    world: &WorldState,
    a_prev: f64,
    case: PerturbationCase,
    scenario: Scenario,
    config: &WorldConfig,
) -> Observation {
    let vision: Vec<u8> = grid.rows().iter().flatten().map(|c| grayscale(*c)).collect();
    let velocity = world.ego().velocity_mps;
    Observation {
        vision,
        non_visual: [
            a_prev.max(0.0),
            (-a_prev).max(0.0),
            velocity,
            velocity / config.v_cap,
            // straight road: heading and lateral offset are identically zero
            0.0,
            0.0,
        ],
        uncertainty: encode_uncertainty(case, scenario),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::render_bev;
    use crate::sim::reset;

    #[test]
    fn palette_is_injective_and_in_range() {
        assert_eq!(grayscale(Class::Road), 90);
        let mut grays: Vec<u8> = Class::ALL.iter().map(|c| grayscale(*c)).collect();
        grays.sort();
        grays.dedup();
        assert_eq!(grays.len(), Class::ALL.len());
        for c in Class::ALL {
            assert_eq!(class_of_gray(grayscale(c)), Some(c));
        }
    }

    #[test]
    fn uncertainty_codes() {
        use PerturbationCase::*;
        assert_eq!(encode_uncertainty(Vexv, Scenario::INFORMED), Some([1, 0, 0, 0]));
        assert_eq!(encode_uncertainty(Xevv, Scenario::INFORMED), Some([0, 1, 0, 0]));
        assert_eq!(encode_uncertainty(Vexx, Scenario::INFORMED), Some([0, 0, 1, 0]));
        assert_eq!(encode_uncertainty(Xexx, Scenario::INFORMED), Some([0, 0, 0, 1]));
        assert_eq!(encode_uncertainty(Vevv, Scenario::INFORMED), Some([0, 0, 0, 0]));
        assert_eq!(encode_uncertainty(Vexx, Scenario::PERTURBED), None);
        assert_eq!(encode_uncertainty(Vexx, Scenario::CORRECT), None);
        for c in PerturbationCase::ALL {
            assert_eq!(encode_uncertainty(c, Scenario::CORRECT_INFORMED), Some([0; 4]));
        }
    }

    #[test]
    fn scenario_flags_and_lengths() {
        let lens: Vec<usize> = (1..=4).map(|i| Scenario::from_id(i).unwrap().observation_len()).collect();
        assert_eq!(lens, vec![106, 106, 110, 110]);
        assert!(Scenario::from_id(0).is_err());
        assert!(Scenario::from_id(5).is_err());
        assert!(!Scenario::CORRECT.perturbed() && !Scenario::CORRECT.informed());
        assert!(Scenario::PERTURBED.perturbed() && !Scenario::PERTURBED.informed());
        assert!(Scenario::INFORMED.perturbed() && Scenario::INFORMED.informed());
        assert!(!Scenario::CORRECT_INFORMED.perturbed() && Scenario::CORRECT_INFORMED.informed());
    }

    #[test]
    fn initial_observation() {
        let cfg = WorldConfig::default();
        let w = reset(&cfg, 0).unwrap();
        let g = render_bev(&w);
        let o1 = assemble_observation(&g, &w, 0.0, PerturbationCase::Vevv, Scenario::CORRECT, &cfg);
        assert_eq!(o1.len(), 106);
        assert_eq!(o1.non_visual, [0.0; 6]);
        let o3 = assemble_observation(&g, &w, 0.0, PerturbationCase::Vevv, Scenario::INFORMED, &cfg);
        assert_eq!(o3.len(), 110);
        assert_eq!(o3.vision_grid().unwrap(), g);
    }

    #[test]
    fn throttle_and_brake_are_exclusive() {
        let cfg = WorldConfig::default();
        let w = reset(&cfg, 0).unwrap();
        let g = render_bev(&w);
        for a in [-1.0, -0.3, 0.0, 0.4, 1.0] {
            let o = assemble_observation(&g, &w, a, PerturbationCase::Vevv, Scenario::CORRECT, &cfg);
            assert_eq!(o.non_visual[0] * o.non_visual[1], 0.0);
        }
    }

    #[test]
    fn input_scaling() {
        let cfg = WorldConfig::default();
        let w = reset(&cfg, 0).unwrap();
        let g = render_bev(&w);
        let o = assemble_observation(&g, &w, -0.5, PerturbationCase::Vexv, Scenario::INFORMED, &cfg);
        let x: Vec<f64> = o.to_input();
        assert_eq!(x.len(), 110);
        assert!(x[..100].iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(x[101], 0.5);
        assert_eq!(&x[106..], &[1.0, 0.0, 0.0, 0.0]);
        let mut short = vec![0.0f32; 106];
        assert!(o.write_input(&mut short).is_err());
    }
}
