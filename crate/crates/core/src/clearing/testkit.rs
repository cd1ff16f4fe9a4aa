//! Small slots and a brute-force clearing oracle shared by the clearing tests.

use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::{clear_reference, ClearingSolution};
use crate::error::Result;
use crate::grid::{build_grid, Bus, GridModel};
use crate::lp::SolveOptions;
use crate::market::{build_bid_match, BidMatch, GroupPartition, Peer};

#[derive(Debug, Clone)]
pub struct Slot {
    pub peers: Vec<Peer>,
    pub bid_match: BidMatch,
    pub grid: GridModel,
    pub partition: GroupPartition,
}

impl Slot {
    pub fn clear(&self) -> Result<ClearingSolution> {
        clear_reference(&self.peers, &self.bid_match, &self.grid, &self.partition, &SolveOptions::default())
    }
}

/// Bus 0 is the substation, bus 1 hangs off it.
pub fn single_line(r: f64, x: f64, base_kva: f64, v_lo: f64, v_hi: f64) -> GridModel {
    let buses = [
        Bus { id: 0, parent: None, r: 0.0, x: 0.0 },
        Bus { id: 1, parent: Some(0), r, x },
    ];
    build_grid(&buses, 1.0, v_lo, v_hi, base_kva).unwrap()
}

pub fn wide_grid() -> GridModel {
    single_line(1e-4, 1e-4, 1000.0, 0.0, 4.0)
}

#[allow(clippy::too_many_arguments)]
pub fn peer(id: usize, c: f64, e: f64, ask: f64, bid: f64, us: f64, ub: f64, group: usize) -> Peer {
    Peer {
        id,
        bus: 1,
        consumption: c,
        production: e,
        ask,
        bid,
        utility_sell: us,
        utility_buy: ub,
        reactive: 0.0,
        group,
        pv_kw: e,
        pv_actor: false,
    }
}

/// Seller S with 2 kWh surplus (λs = λub = 0.15 / 0.1417) and buyers B1
/// (λb = 0.18) and B2 (λb = 0.16) short 1 kWh each. Groups: {S}, {B1}, {B2}.
pub fn three_peer_slot() -> Slot {
    let peers = vec![
        peer(0, 0.0, 2.0, 0.15, 0.15, 0.19, 0.1417, 0),
        peer(1, 1.0, 0.0, 0.15, 0.18, 0.18, 0.1417, 1),
        peer(2, 1.0, 0.0, 0.15, 0.16, 0.16, 0.1417, 2),
    ];
    let bid_match = build_bid_match(&peers);
    let partition = GroupPartition::from_peers(&peers, 3).unwrap();
    Slot {
        peers,
        bid_match,
        grid: wide_grid(),
        partition,
    }
}

/// Three peers with quarter-kWh quantities and random bids.
pub fn random_three_peer_slot() -> impl Strategy<Value = Slot> {
    let one = (0u32..=12, 0u32..=12, 0u32..=8, 0.10f64..0.20, 0.0f64..0.05, 0.0f64..0.05);
    prop::collection::vec(one, 3).prop_map(|v| {
        let peers: Vec<Peer> = v
            .into_iter()
            .enumerate()
            .map(|(k, (c, e, cap, ub, ask_up, us_up))| {
                let ask = ub + ask_up;
                let us = ub + us_up;
                let mut p = peer(k, f64::from(c) * 0.25, f64::from(e) * 0.25, ask, us, us, ub, k);
                p.pv_kw = f64::from(cap) * 0.25;
                p
            })
            .collect();
        let bid_match = build_bid_match(&peers);
        let partition = GroupPartition::from_peers(&peers, 3).unwrap();
        Slot {
            peers,
            bid_match,
            grid: wide_grid(),
            partition,
        }
    })
}

/// Best seller margin over every assignment of quarter-kWh trades to the
/// admissible pairs that respects big-M, surpluses and deficits.
pub fn enumerate_best(peers: &[Peer], bid_match: &BidMatch) -> f64 {
    let pairs: Vec<(usize, usize)> = bid_match.pairs().collect();
    let quarter = |v: f64| (v * 4.0).round() as i64;
    let surplus: Vec<i64> = peers.iter().map(|p| quarter(p.production - p.consumption).max(0)).collect();
    let deficit: Vec<i64> = peers.iter().map(|p| quarter(p.consumption - p.production).max(0)).collect();
    let mut out = vec![0i64; peers.len()];
    let mut inn = vec![0i64; peers.len()];
    let mut best = 0.0f64;
    fn rec(
        k: usize,
        value: f64,
        pairs: &[(usize, usize)],
        peers: &[Peer],
        bid_match: &BidMatch,
        surplus: &[i64],
        deficit: &[i64],
        out: &mut [i64],
        inn: &mut [i64],
        best: &mut f64,
    ) {
        if k == pairs.len() {
            *best = best.max(value);
            return;
        }
        let (i, j) = pairs[k];
        let cap = ((bid_match.big_m(i) * 4.0).round() as i64)
            .min(surplus[i] - out[i])
            .min(deficit[j] - inn[j]);
        let margin = super::seller_margin(&peers[i], &peers[j]);
        for q in 0..=cap.max(0) {
            out[i] += q;
            inn[j] += q;
            rec(k + 1, value + margin * q as f64 * 0.25, pairs, peers, bid_match, surplus, deficit, out, inn, best);
            out[i] -= q;
            inn[j] -= q;
        }
    }
    rec(0, 0.0, &pairs, peers, bid_match, &surplus, &deficit, &mut out, &mut inn, &mut best);
    best
}
