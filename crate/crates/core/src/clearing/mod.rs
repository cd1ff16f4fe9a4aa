//! Market clearing for one hourly slot.
//!
//! Both clearing models share the same market block over the variables
//!
//! * `X_ij ∈ [0, M_i]` for every admissible pair (`Y_ij = 1`),
//! * `U_buy_i`: energy peer `i` buys from the utility,
//! * `U_sell_i`: energy peer `i` sells to the utility,
//! * `e_c_i ∈ [0, e_i]`: curtailed production,
//!
//! with one balance row per peer,
//! `Σ_j X_ij − Σ_j X_ji + U_sell_i − U_buy_i + e_c_i = e_i − c_i`,
//! and the voltage limits of every bus over the nodal injections
//! `p_n = Σ_{i at n} (e_i − e_c_i − c_i) / base`, `q_n = Σ_{i at n} ρ_i`.
//!
//! Each peer acts in one role per slot: sellers (`e ≥ c`) never buy from the
//! utility, buyers never sell to it and never curtail.

pub mod fair;
pub mod reference;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::lp::{self, LpProblem, LpSolution, LpStatus, Relation, Var, Violation};
use crate::market::{BidMatch, GroupPartition, Peer, TradeMatrix};

pub use fair::{
    alternating_solve, audit_fair, build_fair_lp, epsilon_sweep, AlternatingOptions, Clock, FairLp, FairModelInputs,
    FairOutcome, IterationRecord, NoClock, DEFAULT_ITER_CAP, DEFAULT_TOL,
};
pub use reference::{build_reference_lp, clear_reference};

#[derive(Debug, Clone, PartialEq)]
pub struct ClearingSolution {
    pub x: TradeMatrix,
    pub u_buy: Vec<f64>,
    pub u_sell: Vec<f64>,
    pub curtailment: Vec<f64>,
    /// Seller margin `Σ X_ij ((λs_i + λb_j)/2 − λub_i)`, €.
    pub objective: f64,
    pub status: LpStatus,
    /// Simplex iterations spent on the LP(s) behind this solution.
    pub iterations: usize,
}

impl ClearingSolution {
    /// Nodal injections `(p, q)` per bus position, per unit.
    pub fn injections(&self, peers: &[Peer], grid: &GridModel) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = grid.num_buses();
        let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
        for (i, peer) in peers.iter().enumerate() {
            if !grid.contains(peer.bus) {
                return Err(Error::UnknownBus { peer: i, bus: peer.bus });
            }
            if let Some(pos) = grid.position(peer.bus) {
                p[pos] += (peer.production - self.curtailment[i] - peer.consumption) / grid.base_kva();
                q[pos] += peer.reactive;
            }
        }
        Ok((p, q))
    }

    /// Squared bus voltages under this dispatch.
    pub fn voltages(&self, peers: &[Peer], grid: &GridModel) -> Result<Vec<f64>> {
        let (p, q) = self.injections(peers, grid)?;
        grid.voltage_profile(&p, &q)
    }

    /// Left minus right side of peer `i`'s balance row.
    pub fn balance_residual(&self, peers: &[Peer], i: usize) -> f64 {
        self.x.sold(i) - self.x.bought(i) + self.u_sell[i] - self.u_buy[i] + self.curtailment[i]
            - (peers[i].production - peers[i].consumption)
    }

    /// The same trades with utility exchange and curtailment adjusted so
    /// that every balance row of `peers` holds. A surplus first cuts
    /// imports, then exports; a deficit first cuts exports, then
    /// curtailment, then imports. Used to carry trades across a change in
    /// production; the result may still violate other rows.
    pub fn rebalanced(&self, peers: &[Peer]) -> ClearingSolution {
        let mut out = self.clone();
        for i in 0..peers.len().min(out.u_buy.len()) {
            let r = out.balance_residual(peers, i);
            if r < 0.0 {
                let cut = (-r).min(out.u_buy[i]);
                out.u_buy[i] -= cut;
                out.u_sell[i] += -r - cut;
            } else if r > 0.0 {
                let mut rest = r;
                for v in [&mut out.u_sell[i], &mut out.curtailment[i]] {
                    let cut = rest.min(*v);
                    *v -= cut;
                    rest -= cut;
                }
                out.u_buy[i] += rest;
            }
        }
        out
    }

    pub fn total_u_sell(&self) -> f64 {
        self.u_sell.iter().sum()
    }

    pub fn total_curtailment(&self) -> f64 {
        self.curtailment.iter().sum()
    }
}

/// Per-peer extra profit against trading only with the utility.
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueLedger {
    pub per_peer: Vec<f64>,
    /// One entry per fairness group.
    pub per_group: Vec<f64>,
    /// Collective profit of g_pv.
    pub pv: f64,
}

/// Seller part of a trade's value: price above the seller's buyback rate.
pub(crate) fn seller_margin(seller: &Peer, buyer: &Peer) -> f64 {
    0.5 * (seller.ask + buyer.bid) - seller.utility_buy
}

/// Buyer part of a trade's value: the buyer's retail rate above the price.
pub(crate) fn buyer_margin(seller: &Peer, buyer: &Peer) -> f64 {
    buyer.utility_sell - 0.5 * (seller.ask + buyer.bid)
}

/// `γ_i = Σ_j X_ij ((λs_i+λb_j)/2 − λub_i) + X_ji (λus_i − (λs_j+λb_i)/2)`,
/// aggregated per group.
pub fn compute_revenue(solution: &ClearingSolution, peers: &[Peer], partition: &GroupPartition) -> RevenueLedger {
    let mut per_peer = vec![0.0; peers.len()];
    for (i, j, v) in solution.x.triples() {
        per_peer[i] += v * seller_margin(&peers[i], &peers[j]);
        per_peer[j] += v * buyer_margin(&peers[i], &peers[j]);
    }
    let per_group = partition
        .groups()
        .iter()
        .map(|g| g.iter().map(|&i| per_peer[i]).sum())
        .collect();
    let pv = partition.pv().iter().map(|&i| per_peer[i]).sum();
    RevenueLedger { per_peer, per_group, pv }
}

/// Variables and row families of the shared market block.
#[derive(Debug, Clone)]
pub(crate) struct MarketBlock {
    pub n: usize,
    /// `(seller, buyer, X_ij)` for every admissible pair, row-major.
    pub x: Vec<(usize, usize, Var)>,
    pub u_buy: Vec<Var>,
    pub u_sell: Vec<Var>,
    pub curtail: Vec<Var>,
}

/// Named row ranges, used to point at the constraint family an infeasible
/// or violating point trips over.
#[derive(Debug, Clone, Default)]
pub(crate) struct Families(Vec<(Range<usize>, &'static str)>);

impl Families {
    pub fn mark(&mut self, name: &'static str, rows: Range<usize>) {
        if !rows.is_empty() {
            self.0.push((rows, name));
        }
    }

    pub fn of_row(&self, row: usize) -> Option<&'static str> {
        self.0.iter().find(|(r, _)| r.contains(&row)).map(|&(_, n)| n)
    }

    /// Family of the first violation, bound violations reported as
    /// "variable bounds".
    pub fn first_violated(&self, violations: &[Violation]) -> Option<&'static str> {
        violations.iter().find_map(|v| match *v {
            Violation::Constraint { row, .. } => self.of_row(row),
            Violation::Bound { .. } => Some("variable bounds"),
        })
    }
}

pub(crate) const BALANCE: &str = "energy balance";
pub(crate) const VOLTAGE: &str = "voltage limits";

pub(crate) fn validate_slot(peers: &[Peer], bid_match: &BidMatch, grid: &GridModel) -> Result<()> {
    for (i, p) in peers.iter().enumerate() {
        p.validate(i)?;
        if !grid.contains(p.bus) {
            return Err(Error::UnknownBus { peer: i, bus: p.bus });
        }
    }
    if bid_match.size() != peers.len() {
        return Err(Error::DimensionMismatch {
            expected: peers.len(),
            got: bid_match.size(),
        });
    }
    Ok(())
}

/// Adds the market block to `lp`. With `presolve`, voltage rows that cannot
/// bind for any curtailment within bounds are left out.
pub(crate) fn add_market_block(
    lp: &mut LpProblem,
    families: &mut Families,
    peers: &[Peer],
    bid_match: &BidMatch,
    grid: &GridModel,
    presolve: bool,
) -> Result<MarketBlock> {
    validate_slot(peers, bid_match, grid)?;
    let n = peers.len();
    let x: Vec<(usize, usize, Var)> = bid_match
        .pairs()
        .map(|(i, j)| (i, j, lp.add_var(0.0, bid_match.big_m(i), 0.0)))
        .collect();
    let mut u_buy = Vec::with_capacity(n);
    let mut u_sell = Vec::with_capacity(n);
    let mut curtail = Vec::with_capacity(n);
    for p in peers {
        let seller = p.is_seller();
        u_buy.push(lp.add_var(0.0, if seller { 0.0 } else { f64::INFINITY }, 0.0));
        u_sell.push(lp.add_var(0.0, if seller { f64::INFINITY } else { 0.0 }, 0.0));
        curtail.push(lp.add_var(0.0, if seller { p.production } else { 0.0 }, 0.0));
    }

    let mut rows: Vec<Vec<(Var, f64)>> = (0..n)
        .map(|i| vec![(u_sell[i], 1.0), (u_buy[i], -1.0), (curtail[i], 1.0)])
        .collect();
    for &(i, j, v) in &x {
        rows[i].push((v, 1.0));
        rows[j].push((v, -1.0));
    }
    let start = lp.num_constraints();
    for (i, row) in rows.into_iter().enumerate() {
        lp.add_constraint(row, Relation::Eq, peers[i].production - peers[i].consumption);
    }
    families.mark(BALANCE, start..lp.num_constraints());

    // Injections with no curtailment, per bus position.
    let nb = grid.num_buses();
    let (mut p0, mut q0) = (vec![0.0; nb], vec![0.0; nb]);
    let mut at_bus: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (i, peer) in peers.iter().enumerate() {
        if let Some(pos) = grid.position(peer.bus) {
            p0[pos] += (peer.production - peer.consumption) / grid.base_kva();
            q0[pos] += peer.reactive;
            at_bus[pos].push(i);
        }
    }
    let start = lp.num_constraints();
    for row in grid.voltage_constraint_rows() {
        if !row.rhs.is_finite() {
            continue;
        }
        let fixed: f64 = (0..nb).map(|m| row.coeff_p[m] * p0[m] + row.coeff_q[m] * q0[m]).sum();
        let rhs = row.rhs - fixed;
        let mut coeffs = Vec::new();
        // Largest possible voltage drop from curtailing everything curtailable.
        let mut max_drop = 0.0;
        for (m, peers_here) in at_bus.iter().enumerate() {
            let c = row.coeff_p[m] / grid.base_kva();
            for &i in peers_here {
                if c != 0.0 && peers[i].is_seller() && peers[i].production > 0.0 {
                    coeffs.push((curtail[i], -c));
                    max_drop += c * peers[i].production;
                }
            }
        }
        if presolve {
            let never_binds = match row.relation {
                Relation::Le => 0.0 <= rhs,
                Relation::Ge => -max_drop >= rhs,
                Relation::Eq => false,
            };
            if never_binds {
                continue;
            }
        }
        lp.add_constraint(coeffs, row.relation, rhs);
    }
    families.mark(VOLTAGE, start..lp.num_constraints());

    Ok(MarketBlock {
        n,
        x,
        u_buy,
        u_sell,
        curtail,
    })
}

impl MarketBlock {
    pub fn extract(&self, primal: &[f64]) -> (TradeMatrix, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut x = TradeMatrix::zeros(self.n);
        for &(i, j, v) in &self.x {
            let val = primal[v.index()];
            if val != 0.0 {
                x.set(i, j, val);
            }
        }
        let get = |vars: &[Var]| vars.iter().map(|v| primal[v.index()]).collect();
        (x, get(&self.u_buy), get(&self.u_sell), get(&self.curtail))
    }

    /// Writes `sol` into `point`; trades outside the admissible pairs are
    /// dropped, so callers check them separately.
    pub fn fill(&self, sol: &ClearingSolution, point: &mut [f64]) {
        for &(i, j, v) in &self.x {
            point[v.index()] = sol.x.get(i, j);
        }
        for i in 0..self.n {
            point[self.u_buy[i].index()] = sol.u_buy[i];
            point[self.u_sell[i].index()] = sol.u_sell[i];
            point[self.curtail[i].index()] = sol.curtailment[i];
        }
    }

    /// Seller margin of every trade variable.
    pub fn margin_terms<'a>(&'a self, peers: &'a [Peer]) -> impl Iterator<Item = (Var, f64)> + 'a {
        self.x.iter().map(move |&(i, j, v)| (v, seller_margin(&peers[i], &peers[j])))
    }
}

pub(crate) fn solution_from(
    block: &MarketBlock,
    peers: &[Peer],
    sol: &LpSolution,
    iterations: usize,
) -> ClearingSolution {
    let (x, u_buy, u_sell, curtailment) = block.extract(&sol.primal);
    let objective = block.margin_terms(peers).map(|(v, m)| m * sol.primal[v.index()]).sum();
    ClearingSolution {
        x,
        u_buy,
        u_sell,
        curtailment,
        objective,
        status: sol.status,
        iterations,
    }
}

/// Trades the solution makes outside the admissible set, as `(seller, buyer)`.
pub fn inadmissible_trades(solution: &ClearingSolution, bid_match: &BidMatch) -> Vec<(usize, usize)> {
    solution
        .x
        .triples()
        .filter(|&(i, j, _)| !bid_match.feasible(i, j))
        .map(|(i, j, _)| (i, j))
        .collect()
}

/// Checks `solution` against the full market block (no presolve) with
/// [`lp::check_feasible`]. Violations are returned with their family name;
/// inadmissible trades are reported as bound violations.
pub fn audit_market(
    solution: &ClearingSolution,
    peers: &[Peer],
    bid_match: &BidMatch,
    grid: &GridModel,
    tol: f64,
) -> Result<Vec<(&'static str, Violation)>> {
    let mut lp = LpProblem::new(lp::Sense::Maximize);
    let mut families = Families::default();
    let block = add_market_block(&mut lp, &mut families, peers, bid_match, grid, false)?;
    let mut point = vec![0.0; lp.num_vars()];
    block.fill(solution, &mut point);
    let mut out = audit_point(&lp, &families, &point, tol)?;
    for (i, j) in inadmissible_trades(solution, bid_match) {
        out.push((
            "admissible trades",
            Violation::Bound {
                var: i * peers.len() + j,
                amount: solution.x.get(i, j),
            },
        ));
    }
    Ok(out)
}

pub(crate) fn audit_point(
    lp: &LpProblem,
    families: &Families,
    point: &[f64],
    tol: f64,
) -> Result<Vec<(&'static str, Violation)>> {
    Ok(lp::check_feasible(lp, point, tol)?
        .into_iter()
        .map(|v| (families.first_violated(&[v]).unwrap_or("unnamed"), v))
        .collect())
}

#[cfg(test)]
pub(crate) mod testkit;
