//! Linear programs and their solver.
//!
//! Every optimisation in the crate is expressed as an [`LpProblem`] and handed
//! to [`solve`]. The solver is a bounded-variable revised simplex method
//! (two phases, product-form basis inverse with periodic reinversion, Harris
//! ratio test, and a fallback to Bland's rule when the method stalls on
//! degenerate vertices).
//!
//! ```
//! use p2pfair_core::lp::{solve, LpProblem, LpStatus, Relation, Sense, SolveOptions};
//!
//! // max x s.t. x <= 3, x >= 0
//! let mut lp = LpProblem::new(Sense::Maximize);
//! let x = lp.add_var(0.0, f64::INFINITY, 1.0);
//! lp.add_constraint([(x, 1.0)], Relation::Le, 3.0);
//! let sol = solve(&lp, &SolveOptions::default()).unwrap();
//! assert_eq!(sol.status, LpStatus::Optimal);
//! assert!((sol.value(x) - 3.0).abs() < 1e-9);
//! ```

mod format;
mod pfi;
mod simplex;

use alloc::vec::Vec;
use core::fmt;

pub use format::LpFormat;

/// Default primal feasibility tolerance.
pub const DEFAULT_FEAS_TOL: f64 = 1e-7;

/// Optimisation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Relation of a linear constraint to its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

/// Handle to a variable of an [`LpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(index: usize) -> Self {
        Var(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(Var, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * point[v.0]).sum()
    }
}

/// A linear program over bounded (possibly infinite) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    sense: Sense,
    vars: Vec<VarDef>,
    constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            sense,
            vars: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, objective: f64) -> Var {
        self.vars.push(VarDef {
            lower,
            upper,
            objective,
        });
        Var(self.vars.len() - 1)
    }

    pub fn set_objective(&mut self, var: Var, coeff: f64) {
        self.vars[var.0].objective = coeff;
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_sense(&mut self, sense: Sense) {
        self.sense = sense;
    }

    /// Adds a constraint and returns its row index. Zero coefficients are
    /// dropped and repeated variables are summed.
    pub fn add_constraint<I>(&mut self, coeffs: I, relation: Relation, rhs: f64) -> usize
    where
        I: IntoIterator<Item = (Var, f64)>,
    {
        let mut row: Vec<(Var, f64)> = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        row.sort_by_key(|&(v, _)| v);
        row.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        row.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            coeffs: row,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Objective value of `point` under this problem's objective.
    pub fn objective_value(&self, point: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(point)
            .map(|(v, x)| v.objective * x)
            .sum()
    }

    /// Checks the structural invariants: coefficient references, finite data
    /// and `lower <= upper` for every variable.
    pub fn validate(&self) -> Result<(), LpError> {
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::InvalidBounds { var: j });
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds { var: j });
            }
            if !v.objective.is_finite() {
                return Err(LpError::NonFinite { row: None });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite { row: Some(i) });
            }
            for &(v, a) in &c.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(LpError::UnknownVariable { row: i, var: v.0 });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite { row: Some(i) });
                }
            }
        }
        Ok(())
    }

    /// Renders the problem in the plain-text LP dump format.
    pub fn lp_format(&self) -> LpFormat<'_> {
        LpFormat::new(self)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("constraint {row} references undeclared variable {var}")]
    UnknownVariable { row: usize, var: usize },
    #[error("variable {var} has invalid bounds")]
    InvalidBounds { var: usize },
    #[error("non-finite coefficient or right-hand side (row {row:?})")]
    NonFinite { row: Option<usize> },
    #[error("point has {got} entries, problem has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the problem's own sense.
    pub objective: f64,
    /// One value per variable. Meaningful only when `status` is `Optimal`;
    /// otherwise it is the last iterate.
    pub primal: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn value(&self, var: Var) -> f64 {
        self.primal[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub feas_tol: f64,
    /// `None` means `50 * (variables + constraints)`.
    pub max_iters: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: DEFAULT_FEAS_TOL,
            max_iters: None,
        }
    }
}

impl SolveOptions {
    pub fn iteration_cap(&self, problem: &LpProblem) -> usize {
        self.max_iters
            .unwrap_or(50 * (problem.num_vars() + problem.num_constraints()).max(1))
    }
}

/// Solves `problem`.
///
/// Malformed problems are rejected before any pivoting. Solver outcomes
/// (optimal, infeasible, unbounded, iteration limit) are reported through
/// [`LpSolution::status`].
pub fn solve(problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    Ok(simplex::Simplex::new(problem, options).run(None))
}

/// Like [`solve`], but pivots from `start`, one value per variable. Values
/// outside a variable's bounds are clamped. When `start` satisfies every
/// row the first phase is skipped; otherwise only the residual rows get
/// artificials.
pub fn solve_from(problem: &LpProblem, options: &SolveOptions, start: &[f64]) -> Result<LpSolution, LpError> {
    problem.validate()?;
    if start.len() != problem.num_vars() {
        return Err(LpError::DimensionMismatch {
            expected: problem.num_vars(),
            got: start.len(),
        });
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite { row: None });
    }
    Ok(simplex::Simplex::new(problem, options).run(Some(start)))
}

/// A bound or constraint not satisfied by a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    Bound { var: usize, amount: f64 },
    Constraint { row: usize, amount: f64 },
}

/// Lists every bound and constraint violated by more than `tol` (absolute).
pub fn check_feasible(
    problem: &LpProblem,
    point: &[f64],
    tol: f64,
) -> Result<Vec<Violation>, LpError> {
    if point.len() != problem.num_vars() {
        return Err(LpError::DimensionMismatch {
            expected: problem.num_vars(),
            got: point.len(),
        });
    }
    let mut out = Vec::new();
    for (j, (v, &x)) in problem.vars.iter().zip(point).enumerate() {
        let amount = (v.lower - x).max(x - v.upper);
        if amount > tol || x.is_nan() {
            out.push(Violation::Bound { var: j, amount });
        }
    }
    for (i, c) in problem.constraints.iter().enumerate() {
        let lhs = c.activity(point);
        let amount = match c.relation {
            Relation::Le => lhs - c.rhs,
            Relation::Ge => c.rhs - lhs,
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        if amount > tol || lhs.is_nan() {
            out.push(Violation::Constraint { row: i, amount });
        }
    }
    Ok(out)
}
