//! Stochastic epoch generation from mean load/generation profiles.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CustomerId, CustomerSpec, MarketParams};

/// How a customer's deadline offset from its arrival period is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeadlineModel {
    /// Uniform offset in `2..=6` periods (mean 4).
    RandomShort,
    /// Uniform offset in `6..=10` periods (mean 8).
    RandomLarge,
    Fixed { offset: usize },
    /// Offset looked up by arrival period; the table must be non-increasing.
    ArrivalDependent { offsets: Vec<usize> },
    /// Offset drawn from a discrete distribution.
    Custom { offsets: Vec<usize>, weights: Vec<f64> },
}

impl DeadlineModel {
    fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            DeadlineModel::ArrivalDependent { offsets } => {
                if offsets.len() != horizon {
                    return Err(Error::Config(format!(
                        "arrival_dependent table has {} entries, expected {horizon}",
                        offsets.len()
                    )));
                }
                if offsets.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Config("arrival_dependent offsets must be non-increasing".into()));
                }
            }
            DeadlineModel::Custom { offsets, weights } => {
                if offsets.is_empty() || offsets.len() != weights.len() {
                    return Err(Error::Config(
                        "custom deadline model needs matching, non-empty offsets and weights".into(),
                    ));
                }
                WeightedIndex::new(weights)
                    .map_err(|e| Error::Config(format!("custom deadline weights: {e}")))?;
            }
            _ => {}
        }
        Ok(())
    }

    fn draw_offset<R: Rng>(&self, arrival: usize, rng: &mut R) -> usize {
        match self {
            DeadlineModel::RandomShort => rng.random_range(2..=6),
            DeadlineModel::RandomLarge => rng.random_range(6..=10),
            DeadlineModel::Fixed { offset } => *offset,
            DeadlineModel::ArrivalDependent { offsets } => offsets[arrival - 1],
            DeadlineModel::Custom { offsets, weights } => {
                let dist = WeightedIndex::new(weights).expect("validated weights");
                offsets[dist.sample(rng)]
            }
        }
    }
}

fn default_grid_price() -> f64 {
    5.0
}

fn default_arrivals() -> usize {
    1
}

fn default_period_length() -> f64 {
    1.0
}

/// One load/generation profile. Field names follow the config file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default)]
    pub name: String,
    pub horizon: usize,
    #[serde(default = "default_period_length")]
    pub period_length: f64,
    #[serde(default = "default_grid_price")]
    pub grid_price: f64,
    pub mean_load: Vec<f64>,
    pub mean_generation: Vec<f64>,
    pub relative_stddev: f64,
    pub deadline_model: DeadlineModel,
    pub varphi: f64,
    #[serde(default = "default_arrivals")]
    pub arrivals_per_period: usize,
    /// Market capacity per period; defaults to `arrivals_per_period`.
    #[serde(default)]
    pub max_arrivals: Option<usize>,
    pub seed: u64,
}

impl ProfileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ProfileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let t = self.horizon;
        if self.mean_load.len() != t || self.mean_generation.len() != t {
            return Err(Error::Config(format!(
                "profiles must have {t} entries (mean_load has {}, mean_generation has {})",
                self.mean_load.len(),
                self.mean_generation.len()
            )));
        }
        if self
            .mean_load
            .iter()
            .chain(&self.mean_generation)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("profile means must be finite and non-negative".into()));
        }
        if !(self.relative_stddev.is_finite() && self.relative_stddev >= 0.0) {
            return Err(Error::Config("relative_stddev must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.varphi) {
            return Err(Error::Config("varphi must lie in [0, 1]".into()));
        }
        if self.arrivals_per_period < 1 || self.arrivals_per_period > self.capacity() {
            return Err(Error::Config(format!(
                "arrivals_per_period {} must be in [1, {}]",
                self.arrivals_per_period,
                self.capacity()
            )));
        }
        self.deadline_model.validate(t)
    }

    fn capacity(&self) -> usize {
        self.max_arrivals.unwrap_or(self.arrivals_per_period)
    }

    pub fn params(&self) -> Result<MarketParams> {
        let mut params = MarketParams::new(self.horizon, self.grid_price, self.capacity())?;
        params.period_length = self.period_length;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodDraw {
    pub arrivals: Vec<CustomerSpec>,
    pub renewable: f64,
}

/// One epoch's random draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRealization {
    pub profile: String,
    pub epoch_index: u64,
    pub params: MarketParams,
    pub periods: Vec<PeriodDraw>,
}

impl ScenarioRealization {
    pub fn customers(&self) -> impl Iterator<Item = &CustomerSpec> + '_ {
        self.periods.iter().flat_map(|p| p.arrivals.iter())
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }
}

fn truncated_normal<R: Rng>(mean: f64, rel_std: f64, rng: &mut R) -> f64 {
    let std = rel_std * mean;
    if std == 0.0 {
        return mean;
    }
    let draw = Normal::new(mean, std).expect("finite std").sample(rng);
    draw.max(0.0)
}

/// Draws epoch `epoch_index`. A pure function of `(config, epoch_index)`.
pub fn draw_epoch(config: &ProfileConfig, epoch_index: u64) -> ScenarioRealization {
    let params = config.params().expect("validated config");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(epoch_index);

    let horizon = config.horizon;
    let n = config.arrivals_per_period;
    let mut periods = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let load = truncated_normal(config.mean_load[t - 1], config.relative_stddev, &mut rng);
        let renewable = truncated_normal(config.mean_generation[t - 1], config.relative_stddev, &mut rng);
        let mut arrivals = Vec::with_capacity(n);
        if load > 0.0 {
            let share = load / n as f64;
            for slot in 0..n {
                let offset = config.deadline_model.draw_offset(t, &mut rng);
                arrivals.push(CustomerSpec {
                    id: CustomerId(((t - 1) * params.max_arrivals + slot) as u32),
                    arrival: t,
                    load: share,
                    deadline: (t + offset).min(horizon),
                    criticality: config.varphi,
                });
            }
        }
        periods.push(PeriodDraw { arrivals, renewable });
    }
    ScenarioRealization {
        profile: config.name.clone(),
        epoch_index,
        params,
        periods,
    }
}

/// Index (0, 1 or 2) of the member profile used for 1-based `epoch_index`
/// in a three-way hybrid: epochs `3k+1`, `3k+2`, `3k+3` map to members 0, 1, 2.
pub fn hybrid_member(epoch_index: u64) -> usize {
    (epoch_index.saturating_sub(1) % 3) as usize
}

pub fn hybrid_schedule(configs: &[ProfileConfig; 3], epoch_index: u64) -> ScenarioRealization {
    draw_epoch(&configs[hybrid_member(epoch_index)], epoch_index)
}

/// A scenario is a single profile or a hybrid rotation through three profiles.
#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Single(ProfileConfig),
    Hybrid { name: String, members: Box<[ProfileConfig; 3]> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HybridFile {
    #[serde(default)]
    name: String,
    hybrid: Vec<PathBuf>,
}

impl Scenario {
    pub fn hybrid(name: impl Into<String>, members: [ProfileConfig; 3]) -> Result<Self> {
        let p0 = members[0].params()?;
        for m in &members[1..] {
            let p = m.params()?;
            if p.horizon != p0.horizon || p.max_arrivals != p0.max_arrivals || p.grid_price != p0.grid_price {
                return Err(Error::Config(
                    "hybrid members must share horizon, grid_price and max_arrivals".into(),
                ));
            }
        }
        Ok(Scenario::Hybrid {
            name: name.into(),
            members: Box::new(members),
        })
    }

    /// Loads a profile file, or a hybrid file whose `hybrid` key lists three
    /// profile paths relative to the hybrid file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let value: toml::Table = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if value.contains_key("hybrid") {
            let file: HybridFile = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if file.hybrid.len() != 3 {
                return Err(Error::Config(format!(
                    "{}: hybrid needs exactly 3 member profiles, got {}",
                    path.display(),
                    file.hybrid.len()
                )));
            }
            let base = path.parent().unwrap_or(Path::new("."));
            let mut members = Vec::with_capacity(3);
            for member in &file.hybrid {
                match Scenario::from_path(&base.join(member))? {
                    Scenario::Single(cfg) => members.push(cfg),
                    Scenario::Hybrid { .. } => {
                        return Err(Error::Config("hybrid members must be plain profiles".into()))
                    }
                }
            }
            let name = if file.name.is_empty() { stem } else { file.name };
            let members: [ProfileConfig; 3] = members.try_into().expect("three members");
            Scenario::hybrid(name, members)
        } else {
            let mut cfg = ProfileConfig::from_toml(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if cfg.name.is_empty() {
                cfg.name = stem;
            }
            Ok(Scenario::Single(cfg))
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Scenario::Single(cfg) => &cfg.name,
            Scenario::Hybrid { name, .. } => name,
        }
    }

    pub fn params(&self) -> MarketParams {
        self.first().params().expect("validated config")
    }

    fn first(&self) -> &ProfileConfig {
        match self {
            Scenario::Single(cfg) => cfg,
            Scenario::Hybrid { members, .. } => &members[0],
        }
    }

    /// Mean profiles of every member, used to scale network inputs.
    pub fn profiles(&self) -> Vec<&ProfileConfig> {
        match self {
            Scenario::Single(cfg) => vec![cfg],
            Scenario::Hybrid { members, .. } => members.iter().collect(),
        }
    }

    pub fn draw(&self, epoch_index: u64) -> ScenarioRealization {
        match self {
            Scenario::Single(cfg) => draw_epoch(cfg, epoch_index),
            Scenario::Hybrid { members, .. } => hybrid_schedule(members, epoch_index),
        }
    }

    /// Returns a copy whose member seeds are offset by `seed`, for multi-seed runs.
    pub fn reseeded(&self, seed: u64) -> Scenario {
        let bump = |cfg: &ProfileConfig| ProfileConfig {
            seed: cfg.seed.wrapping_add(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..cfg.clone()
        };
        match self {
            Scenario::Single(cfg) => Scenario::Single(bump(cfg)),
            Scenario::Hybrid { name, members } => Scenario::Hybrid {
                name: name.clone(),
                members: Box::new([bump(&members[0]), bump(&members[1]), bump(&members[2])]),
            },
        }
    }
}

/// The bundled scenario profiles. Mean curves are hand-drawn approximations
/// of the shapes described for each scenario; edit the files under `configs/`.
pub mod presets {
    use super::*;

    pub const SCENARIO_1: &str = include_str!("../configs/scenario1.toml");
    pub const SCENARIO_2: &str = include_str!("../configs/scenario2.toml");
    pub const SCENARIO_3: &str = include_str!("../configs/scenario3.toml");
    pub const SCENARIO_4: &str = include_str!("../configs/scenario4.toml");

    pub fn profile(number: usize) -> Result<ProfileConfig> {
        let text = match number {
            1 => SCENARIO_1,
            2 => SCENARIO_2,
            3 => SCENARIO_3,
            4 => SCENARIO_4,
            _ => return Err(Error::Config(format!("no bundled profile {number}"))),
        };
        ProfileConfig::from_toml(text)
    }

    /// Scenarios 1-4 are single profiles; 5 is the hybrid of 1, 2 and 3.
    pub fn scenario(number: usize) -> Result<Scenario> {
        if number == 5 {
            return Scenario::hybrid("scenario5", [profile(1)?, profile(2)?, profile(3)?]);
        }
        profile(number).map(Scenario::Single)
    }
}
