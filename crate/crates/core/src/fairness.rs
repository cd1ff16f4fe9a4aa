//! Group trade distributions and their 1-D Wasserstein distances.
//!
//! Each fairness group is summarised by the total energy (sold plus bought)
//! of its members. Two groups are compared with the earth mover's distance
//! between these empirical distributions under the cost `|a − b|`; the
//! unfairness index is the largest distance over all group pairs.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp::{self, LpProblem, LpStatus, Relation, Sense, SolveOptions, Var};
use crate::market::{GroupPartition, TradeMatrix};

/// Marginal tolerance of a transport plan.
pub const PLAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TradeDistribution {
    pub group: usize,
    /// One entry per member, in partition order (kWh).
    pub values: Vec<f64>,
}

/// `T_i = Σ_j (X_ij + X_ji)` for every member of every fairness group.
/// Pv actors are counted as trade partners but get no distribution.
pub fn trade_distribution(x: &TradeMatrix, partition: &GroupPartition) -> Vec<TradeDistribution> {
    partition
        .groups()
        .iter()
        .enumerate()
        .map(|(g, members)| TradeDistribution {
            group: g,
            values: members.iter().map(|&i| x.sold(i) + x.bought(i)).collect(),
        })
        .collect()
}

/// `d_ij = |a_i − b_j|`.
pub fn distance_matrix(a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| (x - y).abs()).collect()).collect()
}

/// A coupling of two uniform distributions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl TransportPlan {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: mass.len(),
            });
        }
        Ok(TransportPlan { rows, cols, mass })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    /// Entries with positive mass as `(i, j, mass)`.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(move |(k, &m)| (k / self.cols, k % self.cols, m))
    }

    /// Nonnegative, rows summing to `1/rows` and columns to `1/cols`, all
    /// within `tol`.
    pub fn marginals_hold(&self, tol: f64) -> bool {
        if self.mass.iter().any(|&m| !(m >= -tol)) {
            return false;
        }
        let (r, c) = (self.rows as f64, self.cols as f64);
        let rows_ok = (0..self.rows).all(|i| {
            let s: f64 = (0..self.cols).map(|j| self.get(i, j)).sum();
            (s - 1.0 / r).abs() <= tol
        });
        let cols_ok = (0..self.cols).all(|j| {
            let s: f64 = (0..self.rows).map(|i| self.get(i, j)).sum();
            (s - 1.0 / c).abs() <= tol
        });
        rows_ok && cols_ok
    }

    /// `Σ π_ij |a_i − b_j|`.
    pub fn cost(&self, a: &[f64], b: &[f64]) -> f64 {
        self.support().map(|(i, j, m)| m * (a[i] - b[j]).abs()).sum()
    }
}

/// Optimal transport between the uniform distributions on `a` and `b`,
/// solved as a linear program.
pub fn wasserstein_lp(a: &[f64], b: &[f64]) -> Result<(f64, TransportPlan)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let (n, m) = (a.len(), b.len());
    let d = distance_matrix(a, b);
    let mut problem = LpProblem::new(Sense::Minimize);
    let vars: Vec<Var> = (0..n * m)
        .map(|k| problem.add_var(0.0, f64::INFINITY, d[k / m][k % m]))
        .collect();
    for i in 0..n {
        problem.add_constraint((0..m).map(|j| (vars[i * m + j], 1.0)), Relation::Eq, 1.0 / n as f64);
    }
    for j in 0..m {
        problem.add_constraint((0..n).map(|i| (vars[i * m + j], 1.0)), Relation::Eq, 1.0 / m as f64);
    }
    let sol = lp::solve(&problem, &SolveOptions::default())?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver {
            model: "transport",
            status: sol.status,
            family: None,
        });
    }
    let mass: Vec<f64> = sol.primal.iter().map(|&v| v.max(0.0)).collect();
    Ok((sol.objective.max(0.0), TransportPlan::new(n, m, mass)?))
}

/// Closed-form 1-D W₁: the integral of `|F⁻¹ − G⁻¹|` over the merged
/// quantile grid. Quantile breakpoints are tracked in units of `1/(n·m)`
/// so the merge is exact.
pub fn wasserstein_sorted_oracle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    // Each element of `a` carries m units of mass, each element of `b` n.
    let (mut i, mut j) = (0, 0);
    let (mut left_a, mut left_b) = (m, n);
    let mut acc = 0.0;
    while i < n && j < m {
        let step = left_a.min(left_b);
        acc += step as f64 * (a[i] - b[j]).abs();
        left_a -= step;
        left_b -= step;
        if left_a == 0 {
            i += 1;
            left_a = m;
        }
        if left_b == 0 {
            j += 1;
            left_b = n;
        }
    }
    Ok(acc / (n * m) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDistance {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnfairnessReport {
    /// One entry per pair of distributions, labelled `a < b`.
    pub distances: Vec<PairDistance>,
    pub d_max: f64,
    /// First pair attaining `d_max`; `None` without pairs.
    pub argmax: Option<(usize, usize)>,
    /// Optimal plan per pair, aligned with `distances`.
    pub plans: Vec<TransportPlan>,
}

impl UnfairnessReport {
    /// Builds a report from already computed distances. `d_max` is 0 when
    /// there are no pairs.
    pub fn from_distances(distances: Vec<PairDistance>, plans: Vec<TransportPlan>) -> Self {
        let mut d_max = 0.0;
        let mut argmax = None;
        for p in &distances {
            if argmax.is_none() || p.distance > d_max {
                d_max = p.distance;
                argmax = Some((p.a, p.b));
            }
        }
        UnfairnessReport {
            distances,
            d_max,
            argmax,
            plans,
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> Option<f64> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.distances.iter().find(|p| p.a == a && p.b == b).map(|p| p.distance)
    }
}

/// Pairwise distances of all fairness groups (LP path) and their maximum.
pub fn unfairness(distributions: &[TradeDistribution]) -> Result<UnfairnessReport> {
    if distributions.len() < 2 {
        return Err(Error::TooFewGroups(distributions.len()));
    }
    unfairness_any(distributions)
}

/// As [`unfairness`] but a single group yields an empty report.
pub(crate) fn unfairness_any(distributions: &[TradeDistribution]) -> Result<UnfairnessReport> {
    let k = distributions.len();
    let mut distances = Vec::new();
    let mut plans = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let (w, plan) = wasserstein_lp(&distributions[a].values, &distributions[b].values)?;
            let (ga, gb) = (distributions[a].group, distributions[b].group);
            distances.push(PairDistance {
                a: ga.min(gb),
                b: ga.max(gb),
                distance: w,
            });
            plans.push(plan);
        }
    }
    Ok(UnfairnessReport::from_distances(distances, plans))
}

/// Unfairness of `x` through the sorted oracle, without plans.
pub fn unfairness_sorted(x: &TradeMatrix, partition: &GroupPartition) -> Result<f64> {
    let t = trade_distribution(x, partition);
    let mut best = 0.0f64;
    for a in 0..t.len() {
        for b in a + 1..t.len() {
            best = best.max(wasserstein_sorted_oracle(&t[a].values, &t[b].values)?);
        }
    }
    Ok(best)
}
