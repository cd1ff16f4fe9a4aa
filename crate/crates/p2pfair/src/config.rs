//! Scenario files (TOML).
//!
//! ```toml
//! seed = 7
//! peers_per_bus = 4
//! noise = 0.1
//! placement = "uniform"          # or "feeder-end"
//! profiles = "shapes.tsv"        # optional; built-in shapes otherwise
//!
//! [grid]
//! topology = "../data/ieee33.tsv"
//! base_kva = 10000.0
//! v0 = 1.0                       # pu, not squared
//! v_min = 0.95
//! v_max = 1.05
//!
//! [tariffs]
//! dynamic = "../data/dynamic_high.tsv"   # hourly wholesale €/kWh
//!
//! [[class]]
//! name = "R"
//! share = 0.4
//! peak_kw = 5.1
//! pv_share = 0.8
//! tariff_mix = [0.8, 0.1, 0.1]   # dynamic, double, flat
//!
//! [community_pv]
//! bus = 12
//! capacity_kw = 0.0
//!
//! [fair]
//! epsilon = 1.0
//! ```
//!
//! Relative paths are resolved against the scenario file's directory.
//! Omitted tariff prices, bid offsets and classes take the built-in
//! defaults; an omitted `[community_pv]` adds no plant.

use std::path::{Path, PathBuf};

use p2pfair_core::clearing::{DEFAULT_ITER_CAP, DEFAULT_TOL};
use p2pfair_core::scenario::{
    ClassSpec, CommunityPv, Placement, ScenarioSpec, TariffSchedule, Tariffs, BUYBACK_PRICE, DOUBLE_DAY_PRICE,
    DOUBLE_NIGHT_PRICE, DYNAMIC_FEE, FLAT_PRICE,
};
use serde::Deserialize;

use crate::error::{AppError, AppResult};
use crate::formats::{parse_series, parse_shapes, parse_topology, read_text};

/// Households per bus in the reference case study.
pub const REFERENCE_PEERS_PER_BUS: usize = 50;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_peers_per_bus")]
    pub peers_per_bus: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub placement: PlacementName,
    pub profiles: Option<PathBuf>,
    pub grid: GridSection,
    pub tariffs: TariffSection,
    #[serde(default, rename = "class")]
    pub classes: Vec<ClassSection>,
    pub community_pv: Option<CommunityPvSection>,
    #[serde(default)]
    pub bids: BidSection,
    #[serde(default)]
    pub fair: FairSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementName {
    #[default]
    Uniform,
    FeederEnd,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub topology: PathBuf,
    #[serde(default = "default_base")]
    pub base_kva: f64,
    #[serde(default = "one")]
    pub v0: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSection {
    pub dynamic: PathBuf,
    #[serde(default = "default_fee")]
    pub dynamic_fee: f64,
    #[serde(default = "default_flat")]
    pub flat: f64,
    #[serde(default = "default_day")]
    pub double_day: f64,
    #[serde(default = "default_night")]
    pub double_night: f64,
    #[serde(default = "default_buyback")]
    pub buyback: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub name: String,
    pub share: f64,
    pub peak_kw: f64,
    pub pv_share: f64,
    pub tariff_mix: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityPvSection {
    pub bus: usize,
    #[serde(default)]
    pub capacity_kw: f64,
    /// Multiplies every plant capacity; defaults to the ratio of households
    /// to the reference community of 32 × 50.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidSection {
    #[serde(default)]
    pub ask_offset: f64,
    #[serde(default)]
    pub bid_offset: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairSection {
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iter_cap")]
    pub max_iter: usize,
}

impl Default for FairSection {
    fn default() -> Self {
        FairSection {
            epsilon: 1.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_ITER_CAP,
        }
    }
}

fn default_peers_per_bus() -> usize {
    4
}
fn default_noise() -> f64 {
    0.1
}
fn default_base() -> f64 {
    10_000.0
}
fn one() -> f64 {
    1.0
}
fn default_v_min() -> f64 {
    0.95
}
fn default_v_max() -> f64 {
    1.05
}
fn default_fee() -> f64 {
    DYNAMIC_FEE
}
fn default_flat() -> f64 {
    FLAT_PRICE
}
fn default_day() -> f64 {
    DOUBLE_DAY_PRICE
}
fn default_night() -> f64 {
    DOUBLE_NIGHT_PRICE
}
fn default_buyback() -> f64 {
    BUYBACK_PRICE
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_iter_cap() -> usize {
    DEFAULT_ITER_CAP
}

/// A parsed scenario file with its inputs loaded.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub spec: ScenarioSpec,
    /// Capacity multiplier for community plants.
    pub pv_scale: f64,
}

/// Plant bus used by `sweep-pv` when the scenario file names none.
pub const DEFAULT_PLANT_BUS: usize = 12;

impl LoadedScenario {
    /// The spec with its community plant replaced by one of `capacity_kw`
    /// reference-community kW (scaled by `pv_scale`) on the file's plant
    /// bus, or [`DEFAULT_PLANT_BUS`].
    pub fn with_plant(&self, capacity_kw: f64) -> ScenarioSpec {
        let bus = self.file.community_pv.as_ref().map_or(DEFAULT_PLANT_BUS, |c| c.bus);
        ScenarioSpec {
            community_pv: Some(CommunityPv {
                bus,
                capacity_kw: capacity_kw * self.pv_scale,
            }),
            ..self.spec.clone()
        }
    }
}

impl ScenarioFile {
    pub fn parse(path: &Path, text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::format(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        Self::parse(path, &read_text(path)?)
    }

    /// Reads the referenced data files and builds the generator spec.
    pub fn resolve(self, base_dir: &Path) -> AppResult<LoadedScenario> {
        let at = |p: &Path| base_dir.join(p);
        let topo_path = at(&self.grid.topology);
        let buses = parse_topology(&topo_path, &read_text(&topo_path)?)?;
        let dyn_path = at(&self.tariffs.dynamic);
        let wholesale = parse_series(&dyn_path, &read_text(&dyn_path)?)?;
        let t = &self.tariffs;
        let tariffs = Tariffs {
            dynamic: TariffSchedule::dynamic(&wholesale, t.dynamic_fee, t.buyback)?,
            double: TariffSchedule::double(t.double_day, t.double_night, t.buyback)?,
            flat: TariffSchedule::flat(t.flat, t.buyback)?,
        };
        let shapes = match &self.profiles {
            Some(p) => {
                let p = at(p);
                parse_shapes(&p, &read_text(&p)?)?
            }
            None => Default::default(),
        };
        let classes = if self.classes.is_empty() {
            ClassSpec::defaults()
        } else {
            self.classes
                .iter()
                .map(|c| ClassSpec {
                    name: c.name.clone(),
                    share: c.share,
                    peak_kw: c.peak_kw,
                    pv_share: c.pv_share,
                    tariff_mix: c.tariff_mix,
                })
                .collect()
        };
        let g = &self.grid;
        if !(g.v_min > 0.0 && g.v_min <= g.v_max) {
            return Err(AppError::BadInput(format!("voltage bounds {} > {}", g.v_min, g.v_max)));
        }
        let households = buses.len() * self.peers_per_bus;
        let reference = (buses.len() - 1).max(1) * REFERENCE_PEERS_PER_BUS;
        let pv_scale = self
            .community_pv
            .as_ref()
            .and_then(|c| c.scale)
            .unwrap_or(households as f64 / reference as f64);
        let spec = ScenarioSpec {
            buses,
            v0: g.v0 * g.v0,
            v_lo: g.v_min * g.v_min,
            v_hi: g.v_max * g.v_max,
            base_kva: g.base_kva,
            peers_per_bus: self.peers_per_bus,
            classes,
            noise: self.noise,
            seed: self.seed,
            shapes,
            tariffs,
            community_pv: self.community_pv.as_ref().map(|c| CommunityPv {
                bus: c.bus,
                capacity_kw: c.capacity_kw * pv_scale,
            }),
            placement: match self.placement {
                PlacementName::Uniform => Placement::Uniform,
                PlacementName::FeederEnd => Placement::FeederEnd,
            },
            ask_offset: self.bids.ask_offset,
            bid_offset: self.bids.bid_offset,
        };
        spec.validate()?;
        Ok(LoadedScenario {
            file: self,
            spec,
            pv_scale,
        })
    }
}

/// Loads `path` and its data files.
pub fn load_scenario(path: &Path) -> AppResult<LoadedScenario> {
    let base = path.parent().unwrap_or(Path::new("."));
    ScenarioFile::load(path)?.resolve(base)
}
