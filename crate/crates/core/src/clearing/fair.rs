//! Distributionally fair clearing.
//!
//! The fair model minimises the unfairness bound `D` over the market block
//! with three extra families tying it to a reference clearing:
//!
//! * every fairness group keeps at least `(1 − ε)·|γ*_g|` of its reference
//!   profit,
//! * total sales to the utility do not exceed the reference total,
//! * total curtailment does not exceed the reference total.
//!
//! With the transport plans `π` fixed, the Wasserstein terms become linear:
//! `T_i = Σ_j (X_ij + X_ji)`, `d_ij ≥ |T_i − T_j|` on the support of `π`, and
//! `Σ π_ij d_ij ≤ D` for every group pair. [`alternating_solve`] alternates
//! between recomputing `π` from the current trades and re-solving this LP.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    add_market_block, audit_point, compute_revenue, inadmissible_trades, seller_margin, solution_from, buyer_margin,
    ClearingSolution, Families, MarketBlock,
};
use crate::error::{Error, Result};
use crate::fairness::{trade_distribution, unfairness_any, TransportPlan, UnfairnessReport, PLAN_TOL};
use crate::grid::GridModel;
use crate::lp::{self, LpProblem, LpStatus, Relation, Sense, SolveOptions, Var, Violation};
use crate::market::{BidMatch, GroupPartition, Peer};

pub const DEFAULT_TOL: f64 = 0.01;
pub const DEFAULT_ITER_CAP: usize = 15;

const FLOORS: &str = "group profit floors";
const UTILITY_CAP: &str = "utility sales cap";
const CURTAIL_CAP: &str = "curtailment cap";
const TOTALS: &str = "trade totals";
const ENVELOPES: &str = "distance envelopes";
const TRANSPORT: &str = "transport cost bounds";

/// One slot, its reference clearing and a sacrifice level.
#[derive(Debug, Clone, Copy)]
pub struct FairModelInputs<'a> {
    pub peers: &'a [Peer],
    pub bid_match: &'a BidMatch,
    pub grid: &'a GridModel,
    pub partition: &'a GroupPartition,
    pub reference: &'a ClearingSolution,
    pub epsilon: f64,
}

impl FairModelInputs<'_> {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::EpsilonRange(self.epsilon));
        }
        if self.reference.status != LpStatus::Optimal {
            return Err(Error::ReferenceNotOptimal(self.reference.status));
        }
        let n = self.peers.len();
        for got in [self.partition.num_peers(), self.reference.x.size()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        Ok(())
    }

    /// `(1 − ε)·|γ*_g|` per fairness group.
    pub fn profit_floors(&self) -> Vec<f64> {
        compute_revenue(self.reference, self.peers, self.partition)
            .per_group
            .iter()
            .map(|g| (1.0 - self.epsilon) * g.abs())
            .collect()
    }
}

/// The fair LP for fixed transport plans.
#[derive(Debug, Clone)]
pub struct FairLp {
    pub problem: LpProblem,
    block: MarketBlock,
    families: Families,
    /// `T_i` per peer; `None` for pv actors and peers that cannot trade.
    t: Vec<Option<Var>>,
    /// `(i, j, d_ij, π_ij)` per group pair.
    d: Vec<Vec<(usize, usize, Var, f64)>>,
    d_max: Var,
}

/// Adds the profit floors and utility/curtailment caps of `inputs` to `lp`.
fn add_reference_ties(
    lp: &mut LpProblem,
    families: &mut Families,
    block: &MarketBlock,
    inputs: &FairModelInputs<'_>,
) {
    let peers = inputs.peers;
    let mut group_of = vec![usize::MAX; peers.len()];
    for (g, members) in inputs.partition.groups().iter().enumerate() {
        for &i in members {
            group_of[i] = g;
        }
    }
    let floors = inputs.profit_floors();
    let mut rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); floors.len()];
    for &(i, j, v) in &block.x {
        if group_of[i] != usize::MAX {
            rows[group_of[i]].push((v, seller_margin(&peers[i], &peers[j])));
        }
        if group_of[j] != usize::MAX {
            rows[group_of[j]].push((v, buyer_margin(&peers[i], &peers[j])));
        }
    }
    let start = lp.num_constraints();
    for (row, floor) in rows.into_iter().zip(floors) {
        if row.is_empty() && floor <= 0.0 {
            continue;
        }
        lp.add_constraint(row, Relation::Ge, floor);
    }
    families.mark(FLOORS, start..lp.num_constraints());

    let start = lp.num_constraints();
    lp.add_constraint(
        block.u_sell.iter().map(|&v| (v, 1.0)),
        Relation::Le,
        inputs.reference.total_u_sell(),
    );
    families.mark(UTILITY_CAP, start..lp.num_constraints());
    let start = lp.num_constraints();
    lp.add_constraint(
        block.curtail.iter().map(|&v| (v, 1.0)),
        Relation::Le,
        inputs.reference.total_curtailment(),
    );
    families.mark(CURTAIL_CAP, start..lp.num_constraints());
}

/// Builds the fair LP. `plans` holds one plan per group pair, in
/// [`GroupPartition::pairs`] order, with rows indexing the first group's
/// members and columns the second's.
pub fn build_fair_lp(inputs: &FairModelInputs<'_>, plans: &[TransportPlan]) -> Result<FairLp> {
    inputs.validate()?;
    let pairs = inputs.partition.pairs();
    if plans.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            got: plans.len(),
        });
    }
    let groups = inputs.partition.groups();
    for (&(a, b), plan) in pairs.iter().zip(plans) {
        if plan.rows() != groups[a].len() || plan.cols() != groups[b].len() || !plan.marginals_hold(PLAN_TOL) {
            return Err(Error::PlanMarginals(a, b));
        }
    }

    let mut problem = LpProblem::new(Sense::Minimize);
    let mut families = Families::default();
    let block = add_market_block(
        &mut problem,
        &mut families,
        inputs.peers,
        inputs.bid_match,
        inputs.grid,
        true,
    )?;
    add_reference_ties(&mut problem, &mut families, &block, inputs);

    let n = inputs.peers.len();
    let mut incident: Vec<Vec<Var>> = vec![Vec::new(); n];
    for &(i, j, v) in &block.x {
        incident[i].push(v);
        incident[j].push(v);
    }
    let mut t = vec![None; n];
    let start = problem.num_constraints();
    for members in groups {
        for &i in members {
            if incident[i].is_empty() {
                continue;
            }
            let ti = problem.add_var(0.0, f64::INFINITY, 0.0);
            let row = core::iter::once((ti, 1.0)).chain(incident[i].iter().map(|&v| (v, -1.0)));
            problem.add_constraint(row, Relation::Eq, 0.0);
            t[i] = Some(ti);
        }
    }
    families.mark(TOTALS, start..problem.num_constraints());

    let d_max = problem.add_var(0.0, f64::INFINITY, 1.0);
    let mut d = Vec::with_capacity(pairs.len());
    let mut envelope_rows = Vec::new();
    let mut cost_rows = Vec::new();
    for (&(a, b), plan) in pairs.iter().zip(plans) {
        let mut pair_d = Vec::new();
        for (r, c, mass) in plan.support() {
            let (i, j) = (groups[a][r], groups[b][c]);
            if t[i].is_none() && t[j].is_none() {
                continue;
            }
            let dv = problem.add_var(0.0, f64::INFINITY, 0.0);
            // d ≥ T_i − T_j and d ≥ T_j − T_i; a missing T is the constant 0,
            // and d ≥ −T is implied by d, T ≥ 0.
            for sign in [1.0, -1.0] {
                let ti = t[i].map(|v| (v, -sign));
                let tj = t[j].map(|v| (v, sign));
                let lhs_positive = match (t[i], t[j]) {
                    (Some(_), None) => sign > 0.0,
                    (None, Some(_)) => sign < 0.0,
                    _ => true,
                };
                if lhs_positive {
                    let row = core::iter::once((dv, 1.0)).chain(ti).chain(tj);
                    envelope_rows.push(problem.add_constraint(row, Relation::Ge, 0.0));
                }
            }
            pair_d.push((i, j, dv, mass));
        }
        d.push(pair_d);
    }
    if let (Some(&lo), Some(&hi)) = (envelope_rows.first(), envelope_rows.last()) {
        families.mark(ENVELOPES, lo..hi + 1);
    }
    for pair_d in &d {
        let row = pair_d.iter().map(|&(_, _, v, m)| (v, m)).chain([(d_max, -1.0)]);
        cost_rows.push(problem.add_constraint(row, Relation::Le, 0.0));
    }
    if let (Some(&lo), Some(&hi)) = (cost_rows.first(), cost_rows.last()) {
        families.mark(TRANSPORT, lo..hi + 1);
    }

    Ok(FairLp {
        problem,
        block,
        families,
        t,
        d,
        d_max,
    })
}

impl FairLp {
    pub fn d_max_var(&self) -> Var {
        self.d_max
    }

    /// The LP point that `sol` induces: its dispatch, the resulting `T`,
    /// tight envelopes `d = |T_i − T_j|` and the smallest admissible `D`.
    pub fn point_of(&self, sol: &ClearingSolution) -> Vec<f64> {
        let mut point = vec![0.0; self.problem.num_vars()];
        self.block.fill(sol, &mut point);
        let total = |i: usize| sol.x.sold(i) + sol.x.bought(i);
        for (i, ti) in self.t.iter().enumerate() {
            if let Some(v) = ti {
                point[v.index()] = total(i);
            }
        }
        let mut worst = 0.0f64;
        for pair_d in &self.d {
            let mut cost = 0.0;
            for &(i, j, v, m) in pair_d {
                let gap = (total(i) - total(j)).abs();
                point[v.index()] = gap;
                cost += m * gap;
            }
            worst = worst.max(cost);
        }
        point[self.d_max.index()] = worst;
        point
    }

    /// Constraint family of the first row `sol` violates, if any.
    pub fn violated_family(&self, sol: &ClearingSolution, tol: f64) -> Option<&'static str> {
        let point = self.point_of(sol);
        lp::check_feasible(&self.problem, &point, tol)
            .ok()
            .and_then(|v| self.families.first_violated(&v))
    }
}

/// Checks the market block and the reference ties of `inputs` for
/// `solution` through [`lp::check_feasible`], independently of any solver
/// output. Voltage rows are checked without presolve.
pub fn audit_fair(
    inputs: &FairModelInputs<'_>,
    solution: &ClearingSolution,
    tol: f64,
) -> Result<Vec<(&'static str, Violation)>> {
    inputs.validate()?;
    let mut lp = LpProblem::new(Sense::Minimize);
    let mut families = Families::default();
    let block = add_market_block(&mut lp, &mut families, inputs.peers, inputs.bid_match, inputs.grid, false)?;
    add_reference_ties(&mut lp, &mut families, &block, inputs);
    let mut point = vec![0.0; lp.num_vars()];
    block.fill(solution, &mut point);
    let mut out = audit_point(&lp, &families, &point, tol)?;
    let n = inputs.peers.len();
    for (i, j) in inadmissible_trades(solution, inputs.bid_match) {
        out.push((
            "admissible trades",
            Violation::Bound {
                var: i * n + j,
                amount: solution.x.get(i, j),
            },
        ));
    }
    Ok(out)
}

/// Wall-clock source for iteration traces.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin.
    fn seconds(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternatingOptions {
    pub tol: f64,
    pub iter_cap: usize,
    pub lp: SolveOptions,
}

impl Default for AlternatingOptions {
    fn default() -> Self {
        AlternatingOptions {
            tol: DEFAULT_TOL,
            iter_cap: DEFAULT_ITER_CAP,
            lp: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Unfairness of the trades entering the iteration.
    pub d1: f64,
    /// Optimal `D` of the fair LP under their transport plans.
    pub d2: f64,
    /// Seller margin of the LP's trades, €.
    pub objective: f64,
    /// Group profits of the LP's trades, €.
    pub group_profits: Vec<f64>,
    /// Seconds since the run started, at the end of the iteration.
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairOutcome {
    pub epsilon: f64,
    pub solution: ClearingSolution,
    /// `(D¹ + D²)/2` of the last iteration when converged; otherwise the
    /// unfairness of the returned trades.
    pub d_max: f64,
    /// Pairwise distances of the returned trades.
    pub report: UnfairnessReport,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// Alternates between transport plans and the fair LP.
///
/// Iteration `k` measures the unfairness `D¹` of the current trades and
/// their optimal plans, then solves the fair LP under those plans for new
/// trades and bound `D²`. Since the current trades are feasible for that LP,
/// `D² ≤ D¹`, and the new trades' unfairness is at most `D²`. When
/// `|D¹ − D²| ≤ tol` the current trades are returned with
/// `D_max = (D¹ + D²)/2`, which lies within `tol/2` of their unfairness.
/// Otherwise, after `iter_cap` iterations, the least unfair feasible trades
/// seen are returned with `converged = false`.
///
/// The first trades are `warm_start` when given, else the reference.
pub fn alternating_solve(
    inputs: &FairModelInputs<'_>,
    options: &AlternatingOptions,
    warm_start: Option<&ClearingSolution>,
    clock: &dyn Clock,
) -> Result<FairOutcome> {
    inputs.validate()?;
    if !(options.tol > 0.0) {
        return Err(Error::InvalidSetting("tol must be positive"));
    }
    if options.iter_cap == 0 {
        return Err(Error::InvalidSetting("iteration cap must be at least 1"));
    }
    let origin = clock.seconds();
    let mut current = warm_start.unwrap_or(inputs.reference).clone();
    if current.x.size() != inputs.peers.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.peers.len(),
            got: current.x.size(),
        });
    }
    let audit_tol = 10.0 * options.lp.feas_tol;
    let mut current_ok = audit_fair(inputs, &current, audit_tol)?.is_empty();
    let mut best: Option<(ClearingSolution, UnfairnessReport)> = None;
    let mut trace = Vec::new();

    for k in 1..=options.iter_cap {
        let report = unfairness_any(&trade_distribution(&current.x, inputs.partition))?;
        let d1 = report.d_max;
        let fair = build_fair_lp(inputs, &report.plans)?;
        // The current trades are a feasible point of this model, so the
        // solve starts there instead of from a cold phase one.
        let sol = lp::solve_from(&fair.problem, &options.lp, &fair.point_of(&current))?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Solver {
                model: "fair",
                status: sol.status,
                family: fair.violated_family(&current, audit_tol),
            });
        }
        let next = solution_from(&fair.block, inputs.peers, &sol, sol.iterations);
        let d2 = sol.objective.max(0.0);
        trace.push(IterationRecord {
            iter: k,
            d1,
            d2,
            objective: next.objective,
            group_profits: compute_revenue(&next, inputs.peers, inputs.partition).per_group,
            wall_s: clock.seconds() - origin,
        });
        if current_ok {
            if (d1 - d2).abs() <= options.tol {
                return Ok(FairOutcome {
                    epsilon: inputs.epsilon,
                    solution: current,
                    d_max: 0.5 * (d1 + d2),
                    report,
                    trace,
                    converged: true,
                    iterations: k,
                });
            }
            if best.as_ref().map_or(true, |(_, r)| d1 < r.d_max) {
                best = Some((current, report));
            }
        }
        current = next;
        current_ok = true;
    }

    let report = unfairness_any(&trade_distribution(&current.x, inputs.partition))?;
    if best.as_ref().map_or(true, |(_, r)| report.d_max < r.d_max) {
        best = Some((current, report));
    }
    let (solution, report) = best.expect("an LP iterate is always feasible");
    Ok(FairOutcome {
        epsilon: inputs.epsilon,
        solution,
        d_max: report.d_max,
        report,
        iterations: trace.len(),
        trace,
        converged: false,
    })
}

/// Runs [`alternating_solve`] for each sacrifice level in `epsilons`
/// (ascending), warm-starting each run from the previous successful one.
/// The first run starts from `warm_start`, or else the reference. A failed
/// run is reported in place and the sweep continues.
pub fn epsilon_sweep(
    inputs: &FairModelInputs<'_>,
    epsilons: &[f64],
    options: &AlternatingOptions,
    warm_start: Option<&ClearingSolution>,
    clock: &dyn Clock,
) -> Result<Vec<Result<FairOutcome>>> {
    if epsilons.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidSetting("sacrifice levels must be ascending"));
    }
    let mut out: Vec<Result<FairOutcome>> = Vec::with_capacity(epsilons.len());
    let mut warm: Option<ClearingSolution> = warm_start.cloned();
    for &epsilon in epsilons {
        let run_inputs = FairModelInputs { epsilon, ..*inputs };
        let result = alternating_solve(&run_inputs, options, warm.as_ref(), clock);
        if let Ok(outcome) = &result {
            warm = Some(outcome.solution.clone());
        }
        out.push(result);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::*;
    use crate::fairness::{unfairness_sorted, wasserstein_lp};
    use crate::market::{build_bid_match, GroupPartition};
    use proptest::prelude::*;

    fn inputs<'a>(s: &'a Slot, reference: &'a ClearingSolution, epsilon: f64) -> FairModelInputs<'a> {
        FairModelInputs {
            peers: &s.peers,
            bid_match: &s.bid_match,
            grid: &s.grid,
            partition: &s.partition,
            reference,
            epsilon,
        }
    }

    /// The three-peer slot with the seller as a pv actor and each buyer in
    /// its own group.
    fn buyers_only_groups() -> Slot {
        let mut s = three_peer_slot();
        s.peers[0].ask = 0.0;
        s.peers[0].utility_buy = 0.0;
        s.peers[0].pv_actor = true;
        s.bid_match = build_bid_match(&s.peers);
        s.partition = GroupPartition::new(vec![vec![1], vec![2]], vec![0], 3).unwrap();
        s
    }

    #[test]
    fn singleton_groups_split_evenly() {
        // Reference prefers B1 (higher bid) but has enough for both: make the
        // seller short so the reference starves B2.
        let mut s = buyers_only_groups();
        s.peers[0].production = 1.0;
        s.peers[0].pv_kw = 1.0;
        s.bid_match = build_bid_match(&s.peers);
        let reference = s.clear().unwrap();
        assert!((reference.x.get(0, 1) - 1.0).abs() < 1e-9);
        let before = unfairness_sorted(&reference.x, &s.partition).unwrap();
        assert!((before - 1.0).abs() < 1e-9);

        let out = alternating_solve(&inputs(&s, &reference, 1.0), &AlternatingOptions::default(), None, &NoClock).unwrap();
        assert!(out.converged);
        assert!(out.d_max <= 0.01);
        assert!((out.solution.x.get(0, 1) - 0.5).abs() < 0.01);
        assert!((out.solution.x.get(0, 2) - 0.5).abs() < 0.01);
    }

    #[test]
    fn two_kwh_seller_serves_both_buyers_fairly() {
        let s = buyers_only_groups();
        let reference = s.clear().unwrap();
        let out = alternating_solve(&inputs(&s, &reference, 1.0), &AlternatingOptions::default(), None, &NoClock).unwrap();
        assert!(out.converged);
        assert!(out.d_max.abs() < 1e-9);
        assert!((out.solution.x.get(0, 1) - 1.0).abs() < 1e-9);
        assert!((out.solution.x.get(0, 2) - 1.0).abs() < 1e-9);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_sacrifice_keeps_reference_feasible() {
        let mut s = buyers_only_groups();
        s.peers[0].production = 1.0;
        s.peers[0].pv_kw = 1.0;
        s.bid_match = build_bid_match(&s.peers);
        let reference = s.clear().unwrap();
        let inp = inputs(&s, &reference, 0.0);
        assert!(audit_fair(&inp, &reference, 1e-9).unwrap().is_empty());
        let report = unfairness_any(&trade_distribution(&reference.x, &s.partition)).unwrap();
        let fair = build_fair_lp(&inp, &report.plans).unwrap();
        let point = fair.point_of(&reference);
        assert!(lp::check_feasible(&fair.problem, &point, 1e-9).unwrap().is_empty());
        let sol = lp::solve(&fair.problem, &SolveOptions::default()).unwrap();
        assert!(sol.objective <= report.d_max + 1e-9);
    }

    #[test]
    fn single_group_has_nothing_to_balance() {
        let mut s = three_peer_slot();
        s.partition = GroupPartition::new(vec![vec![0, 1, 2]], vec![], 3).unwrap();
        let reference = s.clear().unwrap();
        let fair = build_fair_lp(&inputs(&s, &reference, 0.5), &[]).unwrap();
        let sol = lp::solve(&fair.problem, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        let out = alternating_solve(&inputs(&s, &reference, 0.5), &AlternatingOptions::default(), None, &NoClock).unwrap();
        assert!(out.converged && out.d_max == 0.0 && out.iterations == 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = buyers_only_groups();
        let reference = s.clear().unwrap();
        assert_eq!(build_fair_lp(&inputs(&s, &reference, 1.5), &[]).unwrap_err(), Error::EpsilonRange(1.5));
        let skewed = TransportPlan::new(1, 1, vec![0.5]).unwrap();
        assert_eq!(
            build_fair_lp(&inputs(&s, &reference, 0.5), &[skewed]).unwrap_err(),
            Error::PlanMarginals(0, 1)
        );
        let mut bad = reference.clone();
        bad.status = LpStatus::Infeasible;
        assert!(matches!(
            build_fair_lp(&inputs(&s, &bad, 0.5), &[]),
            Err(Error::ReferenceNotOptimal(_))
        ));
        let opts = AlternatingOptions { tol: 0.0, ..Default::default() };
        assert!(alternating_solve(&inputs(&s, &reference, 0.5), &opts, None, &NoClock).is_err());
        assert!(epsilon_sweep(&inputs(&s, &reference, 0.0), &[0.5, 0.1], &Default::default(), None, &NoClock).is_err());
    }

    #[test]
    fn sweep_with_duplicates_repeats_outcomes() {
        let mut s = buyers_only_groups();
        s.peers[0].production = 1.0;
        s.peers[0].pv_kw = 1.0;
        s.bid_match = build_bid_match(&s.peers);
        let reference = s.clear().unwrap();
        let runs = epsilon_sweep(&inputs(&s, &reference, 0.0), &[0.0, 0.2, 0.2], &Default::default(), None, &NoClock).unwrap();
        let runs: Vec<FairOutcome> = runs.into_iter().map(|r| r.unwrap()).collect();
        let before = unfairness_sorted(&reference.x, &s.partition).unwrap();
        assert!(runs[0].d_max <= before + 1e-9);
        assert!((runs[1].d_max - runs[2].d_max).abs() <= 0.01);
        assert!(runs[1].d_max <= runs[0].d_max + 0.01);
    }

    /// Random small community: sellers and buyers in two or three groups.
    fn community() -> impl Strategy<Value = Slot> {
        let one = (0u32..=12, 0u32..=12, 0.14f64..0.15, 0.0f64..0.06, 0usize..3);
        (prop::collection::vec(one, 4..=7), 2usize..=3).prop_map(|(v, k)| {
            let peers: Vec<Peer> = v
                .into_iter()
                .enumerate()
                .map(|(i, (c, e, ub, up, g))| {
                    let mut p = peer(i, f64::from(c) * 0.25, f64::from(e) * 0.25, ub, ub + up, ub + up, ub, 0);
                    p.group = if i < k { i } else { g % k };
                    p
                })
                .collect();
            let bid_match = build_bid_match(&peers);
            let partition = GroupPartition::from_peers(&peers, k).unwrap();
            Slot {
                peers,
                bid_match,
                grid: wide_grid(),
                partition,
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn alternating_contract(s in community(), eps in 0.0f64..=1.0) {
            let reference = s.clear().unwrap();
            let inp = inputs(&s, &reference, eps);
            let opts = AlternatingOptions::default();
            let out = alternating_solve(&inp, &opts, None, &NoClock).unwrap();
            prop_assert!(out.trace.len() <= opts.iter_cap);
            let last = out.trace.last().unwrap();
            prop_assert_eq!(out.converged, (last.d1 - last.d2).abs() <= opts.tol);
            for w in out.trace.windows(2) {
                prop_assert!(w[1].d2 <= w[0].d2 + 1e-7);
            }
            for r in &out.trace {
                prop_assert!(r.d2 <= r.d1 + 1e-7);
            }
            let sorted = unfairness_sorted(&out.solution.x, &s.partition).unwrap();
            prop_assert!((out.d_max - sorted).abs() <= opts.tol + 1e-6);
            let before = unfairness_sorted(&reference.x, &s.partition).unwrap();
            prop_assert!(out.d_max <= before + opts.tol);
            prop_assert!(audit_fair(&inp, &out.solution, 1e-6).unwrap().is_empty());
            let floors = inp.profit_floors();
            let got = compute_revenue(&out.solution, &s.peers, &s.partition).per_group;
            for (g, f) in got.iter().zip(&floors) {
                prop_assert!(*g >= f - 1e-6);
            }
        }

        #[test]
        fn sweep_is_monotone(s in community()) {
            let reference = s.clear().unwrap();
            let grid = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 0.7, 1.0];
            let runs = epsilon_sweep(&inputs(&s, &reference, 0.0), &grid, &Default::default(), None, &NoClock).unwrap();
            let d: Vec<f64> = runs.into_iter().map(|r| r.unwrap().d_max).collect();
            let before = unfairness_sorted(&reference.x, &s.partition).unwrap();
            for w in d.windows(2) {
                prop_assert!(w[1] <= w[0] + 0.01, "{:?}", d);
            }
            for v in &d {
                prop_assert!(*v <= before + 1e-9);
            }
        }
    }

    #[test]
    fn plans_from_lp_pass_validation() {
        let (_, plan) = wasserstein_lp(&[1.0, 2.0, 5.0], &[0.0, 3.0]).unwrap();
        assert!(plan.marginals_hold(PLAN_TOL));
    }
}
