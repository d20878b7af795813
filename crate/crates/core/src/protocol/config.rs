use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::CaseSpec;
use crate::error::{Error, Result};
use crate::observation::Scenario;
use crate::perception::PerturbationCase;
use crate::ppo::PpoHyperParams;
use crate::reward::RewardParams;
use crate::sim::WorldConfig;

/// A perceptual test or training condition: one fixed case or the mixed
/// schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CaseChoice {
    Fixed(PerturbationCase),
    Mpc,
}

impl CaseChoice {
    /// Concrete episode spec; `schedule_seed` is used only by the mixed case.
    pub fn spec(self, schedule_seed: u64) -> CaseSpec {
        match self {
            CaseChoice::Fixed(case) => CaseSpec::Fixed { case },
            CaseChoice::Mpc => CaseSpec::Mpc { seed: schedule_seed },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseChoice::Fixed(c) => c.tag(),
            CaseChoice::Mpc => "MPC",
        }
    }

    pub fn is_perturbed(self) -> bool {
        self != CaseChoice::Fixed(PerturbationCase::Vevv)
    }

    /// Safety-critical set tested by default, plus the mixed case.
    pub const DEFAULT_TESTS: [CaseChoice; 5] = [
        CaseChoice::Fixed(PerturbationCase::Vexv),
        CaseChoice::Fixed(PerturbationCase::Vexx),
        CaseChoice::Fixed(PerturbationCase::Xexx),
        CaseChoice::Fixed(PerturbationCase::Vevv),
        CaseChoice::Mpc,
    ];
}

impl fmt::Display for CaseChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CaseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mpc") {
            Ok(CaseChoice::Mpc)
        } else {
            s.parse().map(CaseChoice::Fixed)
        }
    }
}

impl From<CaseChoice> for String {
    fn from(c: CaseChoice) -> String {
        c.label().to_string()
    }
}

impl TryFrom<String> for CaseChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Everything one train/validate/test run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub training_case: CaseChoice,
    pub total_steps: u64,
    pub validate_every_n_episodes: u64,
    pub validation_episodes: usize,
    pub test_episodes: usize,
    pub test_cases: Vec<CaseChoice>,
    /// Number of best training episodes kept as checkpoint candidates.
    pub candidates: usize,
    pub seed: u64,
    pub world: WorldConfig,
    pub reward: RewardParams<f64>,
    pub ppo: PpoHyperParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_scenario(Scenario::CORRECT)
    }
}

impl ExperimentConfig {
    /// Defaults for a training scenario: correct perception trains on the
    /// unperturbed case, perturbed scenarios on the mixed case.
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            training_case: if scenario.perturbed() {
                CaseChoice::Mpc
            } else {
                CaseChoice::Fixed(PerturbationCase::Vevv)
            },
            total_steps: 2_000_000,
            validate_every_n_episodes: 100,
            validation_episodes: 20,
            test_episodes: 60,
            test_cases: CaseChoice::DEFAULT_TESTS.to_vec(),
            candidates: 3,
            seed: 0,
            world: WorldConfig::default(),
            reward: RewardParams::default(),
            ppo: PpoHyperParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario == Scenario::CORRECT_INFORMED {
            return Err(Error::Config("scenario 4 is for testing only".into()));
        }
        let expected = Self::for_scenario(self.scenario).training_case;
        if self.training_case != expected {
            return Err(Error::Config(format!(
                "{} trains on {}, not {}",
                self.scenario, expected, self.training_case
            )));
        }
        if self.total_steps == 0 || self.validate_every_n_episodes == 0 || self.candidates == 0 {
            return Err(Error::Config("total_steps, validate_every_n_episodes and candidates must be > 0".into()));
        }
        if self.reward.t_max != self.world.t_max {
            return Err(Error::Config("reward t_max must equal world t_max".into()));
        }
        self.world.validate()?;
        self.reward.validate()?;
        self.ppo.validate()
    }

    /// Reads a TOML file: flat top-level keys configure the world; optional
    /// `[ppo]`, `[reward]` and `[experiment]` tables configure the rest.
    /// The scenario is applied before the file so its training case follows.
    pub fn load(path: &Path, scenario: Scenario) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, scenario)
    }

    pub fn from_toml_str(text: &str, scenario: Scenario) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let section = |table: &mut toml::Table, key: &str| -> Result<Option<toml::Value>> {
            match table.remove(key) {
                None => Ok(None),
                Some(v @ toml::Value::Table(_)) => Ok(Some(v)),
                Some(_) => Err(Error::Config(format!("[{key}] must be a table"))),
            }
        };
        let ppo = section(&mut table, "ppo")?;
        let reward = section(&mut table, "reward")?;
        let experiment = section(&mut table, "experiment")?;
        let de = |e: toml::de::Error| Error::Config(e.to_string());

        let mut cfg = Self::for_scenario(scenario);
        if let Some(v) = experiment {
            let mut merged = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            for (k, val) in v.as_table().expect("checked table") {
                if matches!(k.as_str(), "world" | "reward" | "ppo" | "scenario") {
                    return Err(Error::Config(format!("[experiment] cannot set {k}")));
                }
                merged.insert(k.clone(), val.clone());
            }
            cfg = merged.try_into().map_err(de)?;
        }
        cfg.world = toml::Value::Table(table).try_into().map_err(de)?;
        if let Some(v) = ppo {
            cfg.ppo = v.try_into().map_err(de)?;
        }
        cfg.reward = match reward {
            Some(v) => v.try_into().map_err(de)?,
            None => RewardParams { t_max: cfg.world.t_max, ..RewardParams::default() },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Independent seed for `(stream, index)` under a run seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ stream) ^ index)
}

/// Seed streams; training, validation and testing never share seeds.
pub mod stream {
    pub const NET_INIT: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TRAIN_WORLD: u64 = 10;
    pub const TRAIN_SCHEDULE: u64 = 11;
    pub const VALID_WORLD: u64 = 20;
    pub const VALID_SCHEDULE: u64 = 21;
    pub const TEST_WORLD: u64 = 30;
    pub const TEST_SCHEDULE: u64 = 31;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_case_follows_scenario() {
        assert_eq!(ExperimentConfig::for_scenario(Scenario::CORRECT).training_case, CaseChoice::Fixed(PerturbationCase::Vevv));
        assert_eq!(ExperimentConfig::for_scenario(Scenario::PERTURBED).training_case, CaseChoice::Mpc);
        assert_eq!(ExperimentConfig::for_scenario(Scenario::INFORMED).training_case, CaseChoice::Mpc);
        let mut bad = ExperimentConfig::for_scenario(Scenario::INFORMED);
        bad.training_case = CaseChoice::Fixed(PerturbationCase::Vevv);
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::for_scenario(Scenario::CORRECT_INFORMED).validate().is_err());
    }

    #[test]
    fn toml_sections() {
        let text = r#"
            route_length_m = 120.0
            [ppo]
            hidden_width = 32
            [experiment]
            total_steps = 5000
            test_cases = ["vevv", "mpc"]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text, Scenario::PERTURBED).unwrap();
        assert_eq!(cfg.world.route_length_m, 120.0);
        assert_eq!(cfg.ppo.hidden_width, 32);
        assert_eq!(cfg.ppo.clip_eps, 0.2);
        assert_eq!(cfg.total_steps, 5000);
        assert_eq!(cfg.training_case, CaseChoice::Mpc);
        assert_eq!(cfg.test_cases, vec![CaseChoice::Fixed(PerturbationCase::Vevv), CaseChoice::Mpc]);
        assert!(ExperimentConfig::from_toml_str("bogus = 1", Scenario::CORRECT).is_err());
        assert!(ExperimentConfig::from_toml_str("[experiment]\nscenario = 2", Scenario::CORRECT).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn derived_seeds_differ_across_streams() {
        let a = derive_seed(1, stream::TRAIN_WORLD, 0);
        assert_ne!(a, derive_seed(1, stream::VALID_WORLD, 0));
        assert_ne!(a, derive_seed(1, stream::TRAIN_WORLD, 1));
        assert_ne!(a, derive_seed(2, stream::TRAIN_WORLD, 0));
        assert_eq!(a, derive_seed(1, stream::TRAIN_WORLD, 0));
    }

    #[test]
    fn case_choice_parsing() {
        assert_eq!("mpc".parse::<CaseChoice>().unwrap(), CaseChoice::Mpc);
        assert_eq!("vexv".parse::<CaseChoice>().unwrap(), CaseChoice::Fixed(PerturbationCase::Vexv));
        assert!("abc".parse::<CaseChoice>().is_err());
    }
}
