//! Peers, fairness groups, trade matrices and bid matching for one hourly
//! slot.
//!
//! Peers are addressed by their position in the slot's peer slice; `id` is
//! an external label carried through to exported files.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Power factor assumed for household loads without an inverter.
pub const LOAD_POWER_FACTOR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct Peer {
    pub id: usize,
    pub bus: usize,
    /// Consumption c, kWh.
    pub consumption: f64,
    /// Production e, kWh.
    pub production: f64,
    /// Selling floor λs, €/kWh.
    pub ask: f64,
    /// Buying ceiling λb, €/kWh.
    pub bid: f64,
    /// Price the utility charges this peer, λus.
    pub utility_sell: f64,
    /// Price the utility pays this peer, λub.
    pub utility_buy: f64,
    /// Reactive injection ρ, per unit (negative when drawing).
    pub reactive: f64,
    /// Index into [`GroupPartition::groups`]; ignored for pv actors.
    pub group: usize,
    pub pv_kw: f64,
    /// Non-profit community plant (group g_pv).
    pub pv_actor: bool,
}

impl Peer {
    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason| Err(Error::InvalidPeer { peer: index, reason });
        let q = [self.consumption, self.production, self.pv_kw];
        if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("quantities must be finite and nonnegative");
        }
        let p = [self.ask, self.bid, self.utility_sell, self.utility_buy];
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("prices must be finite and nonnegative");
        }
        if !self.reactive.is_finite() {
            return bad("reactive power must be finite");
        }
        if self.ask < self.utility_buy {
            return bad("selling floor below the utility buyback price");
        }
        if self.bid > self.utility_sell {
            return bad("buying ceiling above the utility retail price");
        }
        if self.pv_actor && (self.consumption != 0.0 || self.ask != 0.0) {
            return bad("a pv actor has no consumption and a zero selling floor");
        }
        Ok(())
    }

    /// e − c; positive for a surplus.
    pub fn surplus(&self) -> f64 {
        surplus_deficit(self)
    }

    /// Sells (or is balanced) in this slot. Balanced peers count as sellers.
    pub fn is_seller(&self) -> bool {
        self.production >= self.consumption
    }

    pub fn is_buyer(&self) -> bool {
        !self.is_seller()
    }
}

/// e − c of `peer`, in kWh.
pub fn surplus_deficit(peer: &Peer) -> f64 {
    peer.production - peer.consumption
}

/// Reactive power of a load drawing `consumption_kwh` over an hour at
/// [`LOAD_POWER_FACTOR`] lagging, per unit on `base_kva`.
pub fn lagging_reactive(consumption_kwh: f64, base_kva: f64) -> f64 {
    let tan_phi = libm::tan(libm::acos(LOAD_POWER_FACTOR));
    -consumption_kwh * tan_phi / base_kva
}

/// Average of the seller's floor and the buyer's ceiling.
pub fn trade_price(seller: &Peer, buyer: &Peer) -> Result<f64> {
    if seller.ask > buyer.bid {
        return Err(Error::BidMismatch {
            seller: seller.id,
            buyer: buyer.id,
        });
    }
    Ok(0.5 * (seller.ask + buyer.bid))
}

/// Fairness groups over peer positions, plus the pv-actor group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    pv: Vec<usize>,
}

impl GroupPartition {
    /// Checks that `groups` and `pv` are disjoint, cover `0..num_peers`, and
    /// that every fairness group is non-empty.
    pub fn new(groups: Vec<Vec<usize>>, pv: Vec<usize>, num_peers: usize) -> Result<Self> {
        let mut seen = vec![false; num_peers];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidPartition("empty fairness group"));
            }
        }
        for &i in groups.iter().flatten().chain(&pv) {
            if i >= num_peers {
                return Err(Error::InvalidPartition("member index out of range"));
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPartition("peer in more than one group"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPartition("peer without a group"));
        }
        Ok(GroupPartition { groups, pv })
    }

    /// Groups from the peers' own labels: `num_groups` fairness groups and
    /// every pv actor in g_pv.
    pub fn from_peers(peers: &[Peer], num_groups: usize) -> Result<Self> {
        let mut groups = vec![Vec::new(); num_groups];
        let mut pv = Vec::new();
        for (i, p) in peers.iter().enumerate() {
            if p.pv_actor {
                pv.push(i);
            } else if p.group < num_groups {
                groups[p.group].push(i);
            } else {
                return Err(Error::InvalidPartition("group label out of range"));
            }
        }
        Self::new(groups, pv, peers.len())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn pv(&self) -> &[usize] {
        &self.pv
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_peers(&self) -> usize {
        self.groups.iter().map(Vec::len).sum::<usize>() + self.pv.len()
    }

    /// All 2-combinations `(a, b)` with `a < b`, in lexicographic order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let k = self.groups.len();
        (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
    }
}

/// Dense `n × n` matrix of traded kWh; `get(i, j)` is what `i` sells to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TradeMatrix {
    pub fn zeros(n: usize) -> Self {
        TradeMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, seller: usize, buyer: usize) -> f64 {
        self.data[seller * self.n + buyer]
    }

    pub fn set(&mut self, seller: usize, buyer: usize, kwh: f64) {
        self.data[seller * self.n + buyer] = kwh;
    }

    /// Nonzero entries as `(seller, buyer, kWh)`, row-major.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(k, &v)| (k / self.n, k % self.n, v))
    }

    pub fn sold(&self, i: usize) -> f64 {
        self.data[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn bought(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + j]).sum()
    }
}

/// Admissible trades of a slot and their big-M caps.
#[derive(Debug, Clone, PartialEq)]
pub struct BidMatch {
    n: usize,
    y: Vec<bool>,
    big_m: Vec<f64>,
}

impl BidMatch {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn feasible(&self, seller: usize, buyer: usize) -> bool {
        self.y[seller * self.n + buyer]
    }

    /// M_i in kWh.
    pub fn big_m(&self, i: usize) -> f64 {
        self.big_m[i]
    }

    /// Every `(seller, buyer)` with `Y = 1`, row-major.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, &y)| y)
            .map(move |(k, _)| (k / self.n, k % self.n))
    }
}

/// `Y_ij = 1` iff `i ≠ j`, `i` has a strict surplus, `j` a strict deficit and
/// `λs_i ≤ λb_j`. `M_i` is the installed PV capacity over one hour.
pub fn build_bid_match(peers: &[Peer]) -> BidMatch {
    let n = peers.len();
    let mut y = vec![false; n * n];
    for (i, s) in peers.iter().enumerate() {
        if s.production <= s.consumption {
            continue;
        }
        for (j, b) in peers.iter().enumerate() {
            y[i * n + j] = i != j && b.consumption > b.production && s.ask <= b.bid;
        }
    }
    BidMatch {
        n,
        y,
        big_m: peers.iter().map(|p| p.pv_kw).collect(),
    }
}
