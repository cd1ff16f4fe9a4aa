//! Seeded generation of case-study communities.
//!
//! A [`ScenarioSpec`] describes household classes on a radial feeder:
//! - how large each class is
//! - how much it consumes at peak
//! - how many of its members own PV
//! - which tariffs they hold
//!
//! [`generate`] draws the households and expands them into one peer slice
//! per hour.
//!
//! Random draws happen in a fixed order from a single ChaCha8 stream:
//! 1. class placement
//! 2. tariff assignment, class by class
//! 3. PV ownership, class by class
//! 4. per household, 24 consumption then 24 PV noise factors
//!
//! Households take ids `0..N` in order of (bus id, slot on the bus).

mod shapes;
mod tariff;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use shapes::{ProfileShapes, DEFAULT_CONSUMPTION, DEFAULT_PV};
pub use tariff::{
    is_day_hour, TariffKind, TariffSchedule, Tariffs, BUYBACK_PRICE, DOUBLE_DAY_PRICE, DOUBLE_NIGHT_PRICE,
    DYNAMIC_FEE, FLAT_PRICE, HOURS,
};

use crate::error::{Error, GridError, Result};
use crate::grid::{build_grid, Bus, GridModel};
use crate::market::{build_bid_match, lagging_reactive, BidMatch, GroupPartition, Peer};

/// Tolerance on share and mix sums.
const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    /// Fraction of all households.
    pub share: f64,
    /// Consumption peak and, for owners, installed PV, kW.
    pub peak_kw: f64,
    /// Fraction of the class owning rooftop PV.
    pub pv_share: f64,
    /// Fractions on dynamic, double and flat contracts, in [`TariffKind::ALL`] order.
    pub tariff_mix: [f64; 3],
}

impl ClassSpec {
    /// Rich, moderate and poor households, 40/30/30.
    pub fn defaults() -> Vec<ClassSpec> {
        let class = |name: &str, share, peak_kw, pv_share, tariff_mix| ClassSpec {
            name: name.into(),
            share,
            peak_kw,
            pv_share,
            tariff_mix,
        };
        vec![
            class("R", 0.4, 5.1, 0.8, [0.8, 0.1, 0.1]),
            class("M", 0.3, 3.9, 0.2, [0.5, 0.1, 0.4]),
            class("P", 0.3, 2.1, 0.0, [0.2, 0.1, 0.7]),
        ]
    }
}

/// Where classes sit on the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Classes are shuffled over all household slots.
    #[default]
    Uniform,
    /// Households are ranked by electrical distance from the substation and
    /// the first class takes the nearest slots; the last class ends up on
    /// the weakest feeder ends.
    FeederEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommunityPv {
    pub bus: usize,
    pub capacity_kw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub buses: Vec<Bus>,
    /// Squared substation voltage, pu².
    pub v0: f64,
    /// Squared voltage bounds, pu².
    pub v_lo: f64,
    pub v_hi: f64,
    pub base_kva: f64,
    pub peers_per_bus: usize,
    pub classes: Vec<ClassSpec>,
    /// Standard deviation of the multiplicative profile noise.
    pub noise: f64,
    pub seed: u64,
    pub shapes: ProfileShapes,
    pub tariffs: Tariffs,
    pub community_pv: Option<CommunityPv>,
    pub placement: Placement,
    /// Added to λub to form the selling floor; must be ≥ 0.
    pub ask_offset: f64,
    /// Added to λus to form the buying ceiling; must be ≤ 0.
    pub bid_offset: f64,
}

impl ScenarioSpec {
    /// Default classes, shapes and contracts on `buses` with ±5 % voltage
    /// bounds, 4 households per bus and 10 % noise.
    pub fn with_defaults(buses: Vec<Bus>, base_kva: f64, wholesale: &[f64; HOURS], seed: u64) -> Result<Self> {
        Ok(ScenarioSpec {
            buses,
            v0: 1.0,
            v_lo: 0.95 * 0.95,
            v_hi: 1.05 * 1.05,
            base_kva,
            peers_per_bus: 4,
            classes: ClassSpec::defaults(),
            noise: 0.1,
            seed,
            shapes: ProfileShapes::default(),
            tariffs: Tariffs::with_wholesale(wholesale)?,
            community_pv: None,
            placement: Placement::Uniform,
            ask_offset: 0.0,
            bid_offset: 0.0,
        })
    }

    /// Everything except the grid, which [`build_grid`] checks.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.peers_per_bus == 0 {
            return bad("peers per bus must be positive".into());
        }
        if self.classes.is_empty() {
            return bad("at least one household class is needed".into());
        }
        let total: f64 = self.classes.iter().map(|c| c.share).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return bad(format!("class shares sum to {total}, not 1"));
        }
        for c in &self.classes {
            if !(c.share.is_finite() && c.share >= 0.0) {
                return bad(format!("class {}: share must be in [0, 1]", c.name));
            }
            if !(c.peak_kw.is_finite() && c.peak_kw > 0.0) {
                return bad(format!("class {}: peak must be positive", c.name));
            }
            if !(0.0..=1.0).contains(&c.pv_share) {
                return bad(format!("class {}: PV share must be in [0, 1]", c.name));
            }
            if c.tariff_mix.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return bad(format!("class {}: tariff mix must be nonnegative", c.name));
            }
            let mix: f64 = c.tariff_mix.iter().sum();
            if (mix - 1.0).abs() > SUM_TOL {
                return bad(format!("class {}: tariff mix sums to {mix}, not 1", c.name));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and nonnegative".into());
        }
        if !(self.ask_offset.is_finite() && self.ask_offset >= 0.0) {
            return bad("ask offset must be nonnegative".into());
        }
        if !(self.bid_offset.is_finite() && self.bid_offset <= 0.0) {
            return bad("bid offset must be nonpositive".into());
        }
        if let Some(pv) = self.community_pv {
            if !(pv.capacity_kw.is_finite() && pv.capacity_kw >= 0.0) {
                return bad("community PV capacity must be nonnegative".into());
            }
        }
        self.tariffs.validate()
    }
}

/// Per-household attributes fixed for the whole day.
#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub id: usize,
    pub bus: usize,
    pub class: usize,
    pub tariff: TariffKind,
    /// Installed PV, kW; zero without PV.
    pub pv_kw: f64,
    pub consumption: [f64; HOURS],
    pub production: [f64; HOURS],
}

/// A generated community: the feeder, its class labels, one peer slice per
/// hour and the fairness partition shared by all hours.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridModel,
    pub class_names: Vec<String>,
    /// `slots[h]` holds the peers of hour `h`; every slot lists the same
    /// participants in the same order.
    pub slots: Vec<Vec<Peer>>,
    pub partition: GroupPartition,
    /// Unit-peak PV shape used for community plants.
    pub pv_shape: [f64; HOURS],
}

impl Scenario {
    /// Assembles a scenario from parts, e.g. after re-import, and checks
    /// that the slots agree on their participants.
    pub fn from_parts(
        grid: GridModel,
        class_names: Vec<String>,
        slots: Vec<Vec<Peer>>,
        pv_shape: [f64; HOURS],
    ) -> Result<Self> {
        if slots.len() != HOURS {
            return Err(Error::InvalidScenario(format!("expected {HOURS} hourly slots, got {}", slots.len())));
        }
        let first = &slots[0];
        for (h, slot) in slots.iter().enumerate() {
            let same = slot.len() == first.len()
                && slot.iter().zip(first).all(|(a, b)| {
                    a.id == b.id && a.bus == b.bus && a.group == b.group && a.pv_actor == b.pv_actor
                });
            if !same {
                return Err(Error::InvalidScenario(format!("hour {h} lists different participants")));
            }
            for (i, p) in slot.iter().enumerate() {
                p.validate(i)?;
                if !grid.contains(p.bus) {
                    return Err(Error::UnknownBus { peer: i, bus: p.bus });
                }
            }
        }
        let partition = GroupPartition::from_peers(first, class_names.len())?;
        Ok(Scenario {
            grid,
            class_names,
            slots,
            partition,
            pv_shape,
        })
    }

    pub fn num_peers(&self) -> usize {
        self.slots[0].len()
    }

    pub fn peers(&self, hour: usize) -> &[Peer] {
        &self.slots[hour]
    }

    pub fn bid_match(&self, hour: usize) -> BidMatch {
        build_bid_match(&self.slots[hour])
    }

    /// Hours with a surplus somewhere.
    pub fn active_hours(&self) -> Vec<usize> {
        market_active_slots(&self.slots)
    }
}

/// Splits `total` items by `weights` (summing to 1) with the largest
/// remainder method; ties go to the lower index.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Household slots as (bus, slot on bus), ordered by bus id.
fn household_slots(grid: &GridModel, per_bus: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = grid.buses().to_vec();
    ids.push(grid.substation());
    ids.sort_unstable();
    ids.into_iter().flat_map(|b| core::iter::repeat(b).take(per_bus)).collect()
}

fn draw_factor(rng: &mut ChaCha8Rng, noise: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (1.0 + noise * z).max(0.0)
}

/// Draws the households of `spec`.
pub fn generate_households(spec: &ScenarioSpec, grid: &GridModel) -> Result<Vec<Household>> {
    spec.validate()?;
    let buses = household_slots(grid, spec.peers_per_bus);
    let n = buses.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let shares: Vec<f64> = spec.classes.iter().map(|c| c.share).collect();
    let counts = apportion(n, &shares);
    let mut class_of: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &m)| vec![k; m]).collect();
    match spec.placement {
        Placement::Uniform => class_of.shuffle(&mut rng),
        Placement::FeederEnd => {
            // Electrical distance of a bus: its own resistive sensitivity.
            let distance = |bus| grid.position(bus).map_or(0.0, |p| grid.r_sens(p, p));
            let mut slots: Vec<usize> = (0..n).collect();
            slots.sort_by(|&a, &b| distance(buses[a]).total_cmp(&distance(buses[b])).then(a.cmp(&b)));
            let ranked = class_of.clone();
            for (rank, &slot) in slots.iter().enumerate() {
                class_of[slot] = ranked[rank];
            }
        }
    }
    let members: Vec<Vec<usize>> = (0..spec.classes.len())
        .map(|k| (0..n).filter(|&i| class_of[i] == k).collect())
        .collect();

    let mut tariff = vec![TariffKind::Flat; n];
    for (k, class) in spec.classes.iter().enumerate() {
        let split = apportion(members[k].len(), &class.tariff_mix);
        let mut kinds: Vec<TariffKind> = TariffKind::ALL
            .iter()
            .zip(&split)
            .flat_map(|(&t, &m)| vec![t; m])
            .collect();
        kinds.shuffle(&mut rng);
        for (&i, t) in members[k].iter().zip(kinds) {
            tariff[i] = t;
        }
    }

    let mut owns_pv = vec![false; n];
    for (k, class) in spec.classes.iter().enumerate() {
        let owners = apportion(members[k].len(), &[class.pv_share, 1.0 - class.pv_share])[0];
        let mut picked = members[k].clone();
        picked.shuffle(&mut rng);
        for &i in picked.iter().take(owners) {
            owns_pv[i] = true;
        }
    }

    let c_shape = spec.shapes.consumption();
    let pv_shape = spec.shapes.pv();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let class = &spec.classes[class_of[i]];
        let pv_kw = if owns_pv[i] { class.peak_kw } else { 0.0 };
        let mut consumption = [0.0; HOURS];
        let mut production = [0.0; HOURS];
        for h in 0..HOURS {
            consumption[h] = c_shape[h] * draw_factor(&mut rng, spec.noise) * class.peak_kw;
        }
        for h in 0..HOURS {
            // Drawn for every household so ownership does not shift the stream.
            let f = draw_factor(&mut rng, spec.noise);
            production[h] = (pv_shape[h] * f * pv_kw).min(pv_kw);
        }
        out.push(Household {
            id: i,
            bus: buses[i],
            class: class_of[i],
            tariff: tariff[i],
            pv_kw,
            consumption,
            production,
        });
    }
    Ok(out)
}

/// The peer of `household` in `hour`: bids sit at the tariff bounds shifted
/// by `spec`'s offsets, and the load draws reactive power at the default
/// power factor.
pub fn household_peer(spec: &ScenarioSpec, household: &Household, hour: usize) -> Peer {
    let schedule = spec.tariffs.get(household.tariff);
    let us = schedule.retail(hour);
    let ub = schedule.buyback();
    Peer {
        id: household.id,
        bus: household.bus,
        consumption: household.consumption[hour],
        production: household.production[hour],
        ask: ub + spec.ask_offset,
        bid: (us + spec.bid_offset).max(0.0),
        utility_sell: us,
        utility_buy: ub,
        reactive: lagging_reactive(household.consumption[hour], spec.base_kva),
        group: household.class,
        pv_kw: household.pv_kw,
        pv_actor: false,
    }
}

/// Builds the grid, draws the households, expands them into hourly slots and
/// appends the community plant when `spec` has one.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let grid = build_grid(&spec.buses, spec.v0, spec.v_lo, spec.v_hi, spec.base_kva)?;
    if let Some(pv) = spec.community_pv {
        if !grid.contains(pv.bus) {
            return Err(Error::Grid(GridError::UnknownBus(pv.bus)));
        }
    }
    let households = generate_households(spec, &grid)?;
    let slots: Vec<Vec<Peer>> = (0..HOURS)
        .map(|h| households.iter().map(|hh| household_peer(spec, hh, h)).collect())
        .collect();
    let class_names = spec.classes.iter().map(|c| c.name.clone()).collect();
    let scenario = Scenario::from_parts(grid, class_names, slots, *spec.shapes.pv())?;
    match spec.community_pv {
        Some(pv) => add_community_pv(&scenario, pv.bus, pv.capacity_kw),
        None => Ok(scenario),
    }
}

/// Hours in which at least one peer produces more than it consumes.
pub fn market_active_slots(slots: &[Vec<Peer>]) -> Vec<usize> {
    slots
        .iter()
        .enumerate()
        .filter(|(_, peers)| peers.iter().any(|p| p.production > p.consumption))
        .map(|(h, _)| h)
        .collect()
}

/// Appends a non-profit plant of `capacity_kw` at `bus` that produces the
/// scenario's PV shape and gives its energy away (λs = λub = 0).
pub fn add_community_pv(scenario: &Scenario, bus: usize, capacity_kw: f64) -> Result<Scenario> {
    if !scenario.grid.contains(bus) {
        return Err(Error::Grid(GridError::UnknownBus(bus)));
    }
    if !(capacity_kw.is_finite() && capacity_kw >= 0.0) {
        return Err(Error::InvalidScenario("community PV capacity must be nonnegative".into()));
    }
    let id = scenario.slots[0].iter().map(|p| p.id + 1).max().unwrap_or(0);
    let mut slots = scenario.slots.clone();
    for (h, slot) in slots.iter_mut().enumerate() {
        slot.push(Peer {
            id,
            bus,
            consumption: 0.0,
            production: scenario.pv_shape[h] * capacity_kw,
            ask: 0.0,
            bid: 0.0,
            utility_sell: 0.0,
            utility_buy: 0.0,
            reactive: 0.0,
            group: 0,
            pv_kw: capacity_kw,
            pv_actor: true,
        });
    }
    Scenario::from_parts(scenario.grid.clone(), scenario.class_names.clone(), slots, scenario.pv_shape)
}
