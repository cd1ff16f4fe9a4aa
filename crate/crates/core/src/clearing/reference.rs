//! Revenue-maximising reference clearing.
//!
//! The LP maximises the total seller margin `Σ X_ij ((λs_i + λb_j)/2 − λub_i)`
//! over the market block. Among optimal clearings the one with the least
//! curtailment is returned: when the first LP curtails, a second LP minimises
//! `Σ e_c` with the margin held at its optimum, and a third re-maximises the
//! margin with curtailment fixed at the second LP's values.

use alloc::vec;
use alloc::vec::Vec;

use super::{add_market_block, audit_point, solution_from, ClearingSolution, Families, MarketBlock};
use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::lp::{self, LpProblem, LpStatus, Relation, Sense, SolveOptions};
use crate::market::{BidMatch, GroupPartition, Peer};

/// Relative slack on the optimal margin in the curtailment stage.
const MARGIN_SLACK: f64 = 1e-9;

/// A built clearing LP together with the layout of its variables.
#[derive(Debug, Clone)]
pub struct MarketLp {
    pub problem: LpProblem,
    pub(crate) block: MarketBlock,
    pub(crate) families: Families,
}

pub fn build_reference_lp(
    peers: &[Peer],
    bid_match: &BidMatch,
    grid: &GridModel,
    partition: &GroupPartition,
) -> Result<MarketLp> {
    if partition.num_peers() != peers.len() {
        return Err(Error::DimensionMismatch {
            expected: peers.len(),
            got: partition.num_peers(),
        });
    }
    let mut problem = LpProblem::new(Sense::Maximize);
    let mut families = Families::default();
    let block = add_market_block(&mut problem, &mut families, peers, bid_match, grid, true)?;
    let terms: Vec<_> = block.margin_terms(peers).collect();
    for (v, m) in terms {
        problem.set_objective(v, m);
    }
    Ok(MarketLp {
        problem,
        block,
        families,
    })
}

/// Everyone settles with the utility and nothing is curtailed.
fn no_trade_point(model: &MarketLp, peers: &[Peer]) -> Vec<f64> {
    let mut point = vec![0.0; model.problem.num_vars()];
    for (i, p) in peers.iter().enumerate() {
        let s = p.production - p.consumption;
        if s >= 0.0 {
            point[model.block.u_sell[i].index()] = s;
        } else {
            point[model.block.u_buy[i].index()] = -s;
        }
    }
    point
}

fn failure(model: &MarketLp, peers: &[Peer], status: LpStatus, feas_tol: f64) -> Error {
    let point = no_trade_point(model, peers);
    let family = audit_point(&model.problem, &model.families, &point, feas_tol)
        .ok()
        .and_then(|v| v.first().map(|(f, _)| *f));
    Error::Solver {
        model: "reference",
        status,
        family,
    }
}

pub fn clear_reference(
    peers: &[Peer],
    bid_match: &BidMatch,
    grid: &GridModel,
    partition: &GroupPartition,
    options: &SolveOptions,
) -> Result<ClearingSolution> {
    let mut model = build_reference_lp(peers, bid_match, grid, partition)?;
    let first = lp::solve(&model.problem, options)?;
    if first.status != LpStatus::Optimal {
        return Err(failure(&model, peers, first.status, options.feas_tol));
    }
    let stage_one = solution_from(&model.block, peers, &first, first.iterations);
    if stage_one.total_curtailment() <= options.feas_tol {
        return Ok(stage_one);
    }

    let opt = first.objective;
    let terms: Vec<_> = model.block.margin_terms(peers).collect();
    let mut least_curtailment = model.problem.clone();
    least_curtailment.add_constraint(terms.iter().copied(), Relation::Ge, opt - MARGIN_SLACK * (1.0 + opt.abs()));
    for &(v, _) in &terms {
        least_curtailment.set_objective(v, 0.0);
    }
    for &v in &model.block.curtail {
        least_curtailment.set_objective(v, 1.0);
    }
    least_curtailment.set_sense(Sense::Minimize);
    let second = lp::solve(&least_curtailment, options)?;
    if second.status != LpStatus::Optimal {
        // The stage-one optimum is feasible here; only numerical trouble lands here.
        return Ok(stage_one);
    }
    for &v in &model.block.curtail {
        let e_c = second.primal[v.index()];
        model.problem.set_bounds(v, e_c, e_c);
    }
    let third = lp::solve(&model.problem, options)?;
    let iterations = first.iterations + second.iterations + third.iterations;
    Ok(if third.status == LpStatus::Optimal {
        solution_from(&model.block, peers, &third, iterations)
    } else {
        solution_from(&model.block, peers, &second, iterations)
    })
}
