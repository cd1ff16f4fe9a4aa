//! Per-slot clearing runs. Slots are independent and run on the rayon pool;
//! results come back in hour order, so outputs do not depend on scheduling.

use std::time::Instant;

use p2pfair_core::clearing::{
    clear_reference, compute_revenue, epsilon_sweep, AlternatingOptions, ClearingSolution, Clock, FairModelInputs,
    FairOutcome, RevenueLedger,
};
use p2pfair_core::fairness::{trade_distribution, unfairness, UnfairnessReport};
use p2pfair_core::lp::SolveOptions;
use p2pfair_core::scenario::Scenario;
use rayon::prelude::*;

use crate::error::AppResult;

/// Wall-clock seconds since construction.
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn start() -> Self {
        InstantClock(Instant::now())
    }
}

impl Clock for InstantClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub hour: usize,
    pub solution: ClearingSolution,
    pub report: UnfairnessReport,
    pub revenue: RevenueLedger,
    pub wall_s: f64,
}

pub fn reference_report(scenario: &Scenario, solution: &ClearingSolution) -> AppResult<UnfairnessReport> {
    Ok(unfairness(&trade_distribution(&solution.x, &scenario.partition))?)
}

pub fn run_reference(scenario: &Scenario, hours: &[usize], lp: &SolveOptions) -> AppResult<Vec<ReferenceRun>> {
    hours
        .par_iter()
        .map(|&hour| {
            let clock = InstantClock::start();
            let peers = scenario.peers(hour);
            let solution = clear_reference(peers, &scenario.bid_match(hour), &scenario.grid, &scenario.partition, lp)?;
            let wall_s = clock.seconds();
            let report = reference_report(scenario, &solution)?;
            let revenue = compute_revenue(&solution, peers, &scenario.partition);
            Ok(ReferenceRun {
                hour,
                solution,
                report,
                revenue,
                wall_s,
            })
        })
        .collect()
}

/// Fair outcomes of one slot, one entry per sacrifice level.
#[derive(Debug)]
pub struct FairRun {
    pub hour: usize,
    pub outcomes: Vec<p2pfair_core::Result<FairOutcome>>,
}

/// Chained ε-sweep on every slot of `references`. `warm_starts`, when
/// given, holds one first iterate per reference slot.
pub fn run_fair(
    scenario: &Scenario,
    references: &[ReferenceRun],
    epsilons: &[f64],
    opts: &AlternatingOptions,
    warm_starts: Option<&[ClearingSolution]>,
) -> AppResult<Vec<FairRun>> {
    if let Some(w) = warm_starts {
        if w.len() != references.len() {
            return Err(p2pfair_core::Error::DimensionMismatch {
                expected: references.len(),
                got: w.len(),
            }
            .into());
        }
    }
    references
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            let peers = scenario.peers(r.hour);
            let bid_match = scenario.bid_match(r.hour);
            let inputs = FairModelInputs {
                peers,
                bid_match: &bid_match,
                grid: &scenario.grid,
                partition: &scenario.partition,
                reference: &r.solution,
                epsilon: epsilons.first().copied().unwrap_or(1.0),
            };
            let outcomes = epsilon_sweep(&inputs, epsilons, opts, warm_starts.map(|w| &w[k]), &InstantClock::start())?;
            Ok(FairRun { hour: r.hour, outcomes })
        })
        .collect()
}

/// First iterates for rerunning `previous` on `scenario`, whose peers differ
/// from the earlier run's only in production: each slot's fair trades at
/// sweep point `level`, rebalanced so that the extra output is exported.
/// From a feasible start the alternating descent cannot end above the
/// start's unfairness, which keeps plant-size sweeps monotone. `None` when
/// any of those runs failed.
pub fn carried_over(scenario: &Scenario, previous: &[FairRun], level: usize) -> Option<Vec<ClearingSolution>> {
    previous
        .iter()
        .map(|r| match r.outcomes.get(level)? {
            Ok(o) => Some(o.solution.rebalanced(scenario.peers(r.hour))),
            Err(_) => None,
        })
        .collect()
}
