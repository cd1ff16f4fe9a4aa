//! Two-phase bounded-variable revised primal simplex.
//!
//! Every row `i` gets a logical column `s_i` (a unit column) so that the
//! scaled system reads `A x + s = b`, with bounds on `s_i` encoding the
//! row relation. Rows whose logical cannot absorb the initial residual get
//! an artificial column; phase one drives the artificials to zero.

use alloc::vec;
use alloc::vec::Vec;

use super::pfi::{Pfi, SparseColumns};
use super::{LpProblem, LpSolution, LpStatus, Relation, Sense, SolveOptions};

/// Eta updates between reinversions.
const REFACTOR_EVERY: usize = 100;
/// Primal feasibility tolerance in scaled space (Harris relaxation).
const PRIMAL_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance in scaled space.
const DUAL_TOL: f64 = 1e-9;
/// Smallest usable pivot element in the ratio test.
const PIVOT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic strictly between its bounds: a free variable at zero or a
    /// warm-start value. Prices in both directions.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot { row: usize, theta: f64 },
}

pub(super) struct Simplex<'a> {
    problem: &'a LpProblem,
    m: usize,
    n: usize,
    cols: SparseColumns,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    phase2_cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    rhs: Vec<f64>,
    col_scale: Vec<f64>,
    n_artificial: usize,
    pfi: Pfi,
    iterations: usize,
    max_iters: usize,
    feas_tol: f64,
    work: Vec<f64>,
    duals: Vec<f64>,
}

fn pow2_round(s: f64) -> f64 {
    if !s.is_finite() || s <= 0.0 {
        return 1.0;
    }
    libm::exp2(libm::round(libm::log2(s)))
}

/// Geometric-mean row and column scaling rounded to powers of two.
fn scaling(problem: &LpProblem) -> (Vec<f64>, Vec<f64>) {
    let m = problem.num_constraints();
    let n = problem.num_vars();
    let mut rs = vec![1.0; m];
    let mut cs = vec![1.0; n];
    for _ in 0..4 {
        for (i, c) in problem.constraints().iter().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &(v, a) in &c.coeffs {
                let x = (a * cs[v.index()]).abs();
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi > 0.0 {
                rs[i] = 1.0 / libm::sqrt(lo * hi);
            }
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![0.0f64; n];
        for (i, c) in problem.constraints().iter().enumerate() {
            for &(v, a) in &c.coeffs {
                let x = (a * rs[i]).abs();
                let j = v.index();
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        for j in 0..n {
            if hi[j] > 0.0 {
                cs[j] = 1.0 / libm::sqrt(lo[j] * hi[j]);
            }
        }
    }
    // Final row equilibration so every row's largest entry is about one.
    for (i, c) in problem.constraints().iter().enumerate() {
        let hi = c
            .coeffs
            .iter()
            .map(|&(v, a)| (a * cs[v.index()]).abs())
            .fold(0.0f64, f64::max);
        if hi > 0.0 {
            rs[i] = 1.0 / hi;
        }
    }
    (
        rs.into_iter().map(pow2_round).collect(),
        cs.into_iter().map(pow2_round).collect(),
    )
}

impl<'a> Simplex<'a> {
    pub fn new(problem: &'a LpProblem, options: &SolveOptions) -> Self {
        let m = problem.num_constraints();
        let n = problem.num_vars();
        let (rs, cs) = scaling(problem);

        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in problem.constraints().iter().enumerate() {
            for &(v, a) in &c.coeffs {
                by_col[v.index()].push((i, a * rs[i] * cs[v.index()]));
            }
        }
        let mut cols = SparseColumns::new();
        for col in by_col {
            cols.push_column(col);
        }
        for i in 0..m {
            cols.push_column([(i, 1.0)]);
        }

        let sign = match problem.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for (j, v) in problem.vars().iter().enumerate() {
            lower.push(v.lower / cs[j]);
            upper.push(v.upper / cs[j]);
            cost.push(sign * v.objective * cs[j]);
        }
        let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if cmax > 0.0 {
            let k = pow2_round(1.0 / cmax);
            for c in cost.iter_mut() {
                *c *= k;
            }
        }
        let mut rhs = Vec::with_capacity(m);
        for (i, c) in problem.constraints().iter().enumerate() {
            let (lo, hi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            cost.push(0.0);
            rhs.push(c.rhs * rs[i]);
        }

        Simplex {
            problem,
            m,
            n,
            cols,
            lower,
            upper,
            phase2_cost: cost.clone(),
            cost,
            x: Vec::new(),
            state: Vec::new(),
            head: vec![usize::MAX; m],
            rhs,
            col_scale: cs,
            n_artificial: 0,
            pfi: Pfi::new(m),
            iterations: 0,
            max_iters: options.iteration_cap(problem),
            feas_tol: options.feas_tol,
            work: vec![0.0; m],
            duals: vec![0.0; m],
        }
    }

    fn total_cols(&self) -> usize {
        self.cols.len()
    }

    /// Nonbasic structurals at `start` (clamped) when given, else at a finite
    /// bound or zero; logicals basic where they can absorb the residual,
    /// artificials elsewhere. A feasible `start` needs no artificials.
    fn crash(&mut self, start: Option<&[f64]>) {
        let (n, m) = (self.n, self.m);
        self.x = vec![0.0; n + m];
        self.state = vec![State::Lower; n + m];
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if let Some(start) = start {
                let v = (start[j] / self.col_scale[j]).max(lo).min(hi);
                self.x[j] = v;
                self.state[j] = if v == lo {
                    State::Lower
                } else if v == hi {
                    State::Upper
                } else {
                    State::Zero
                };
            } else if lo.is_finite() {
                self.x[j] = lo;
                self.state[j] = State::Lower;
            } else if hi.is_finite() {
                self.x[j] = hi;
                self.state[j] = State::Upper;
            } else {
                self.x[j] = 0.0;
                self.state[j] = State::Zero;
            }
        }
        let mut residual = self.rhs.clone();
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for (r, v) in self.cols.column(j) {
                    residual[r] -= v * xj;
                }
            }
        }
        let mut artificial_cost = Vec::new();
        for i in 0..m {
            let s = n + i;
            let value = residual[i];
            if value >= self.lower[s] - PRIMAL_TOL && value <= self.upper[s] + PRIMAL_TOL {
                self.x[s] = value;
                self.state[s] = State::Basic;
                self.head[i] = s;
            } else {
                let bound = if value < self.lower[s] {
                    self.state[s] = State::Lower;
                    self.lower[s]
                } else {
                    self.state[s] = if self.upper[s] == self.lower[s] {
                        State::Lower
                    } else {
                        State::Upper
                    };
                    self.upper[s]
                };
                self.x[s] = bound;
                let r = value - bound;
                let sigma = if r >= 0.0 { 1.0 } else { -1.0 };
                self.cols.push_column([(i, sigma)]);
                self.lower.push(0.0);
                self.upper.push(f64::INFINITY);
                self.x.push(r.abs());
                self.state.push(State::Basic);
                self.head[i] = self.total_cols() - 1;
                artificial_cost.push(1.0);
            }
        }
        self.n_artificial = artificial_cost.len();
        self.phase2_cost.resize(self.total_cols(), 0.0);
        self.cost = vec![0.0; n + m];
        self.cost.extend(artificial_cost);
    }

    /// `start`, when given, has one value per structural variable.
    pub fn run(mut self, start: Option<&[f64]>) -> LpSolution {
        self.crash(start);
        self.refactor();

        if self.n_artificial > 0 {
            match self.iterate() {
                Outcome::IterationLimit => return self.finish(LpStatus::IterationLimit),
                Outcome::Unbounded => return self.finish(LpStatus::Infeasible),
                Outcome::Optimal => {}
            }
            let first_art = self.n + self.m;
            let infeasibility: f64 = self.x[first_art..].iter().sum();
            if infeasibility > self.feas_tol {
                return self.finish(LpStatus::Infeasible);
            }
            for j in first_art..self.total_cols() {
                self.upper[j] = 0.0;
            }
        }
        self.cost = self.phase2_cost.clone();
        match self.iterate() {
            Outcome::Optimal => self.finish(LpStatus::Optimal),
            Outcome::Unbounded => self.finish(LpStatus::Unbounded),
            Outcome::IterationLimit => self.finish(LpStatus::IterationLimit),
        }
    }

    fn refactor(&mut self) {
        let basic: Vec<usize> = self.head.clone();
        let n = self.n;
        let inv = self.pfi.reinvert(&self.cols, &basic, |r| n + r);
        for &j in &inv.rejected {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let xj = self.x[j];
            if lo.is_finite() && (!hi.is_finite() || (xj - lo).abs() <= (hi - xj).abs()) {
                self.state[j] = State::Lower;
                self.x[j] = lo;
            } else if hi.is_finite() {
                self.state[j] = State::Upper;
                self.x[j] = hi;
            } else {
                self.state[j] = State::Zero;
                self.x[j] = 0.0;
            }
        }
        for (r, &j) in inv.head.iter().enumerate() {
            self.state[j] = State::Basic;
            self.head[r] = j;
        }
        self.recompute_basics();
    }

    fn recompute_basics(&mut self) {
        let mut rhs = self.rhs.clone();
        for j in 0..self.total_cols() {
            if self.state[j] != State::Basic {
                let xj = self.x[j];
                if xj != 0.0 {
                    for (r, v) in self.cols.column(j) {
                        rhs[r] -= v * xj;
                    }
                }
            }
        }
        self.pfi.ftran(&mut rhs);
        for r in 0..self.m {
            self.x[self.head[r]] = rhs[r];
        }
    }

    /// Chooses an entering column: `(column, direction)` with direction +1
    /// for increasing and -1 for decreasing.
    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.total_cols() {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.cost[j] - self.cols.dot(j, &self.duals);
            let dir = match st {
                State::Lower if d < -DUAL_TOL => 1.0,
                State::Upper if d > DUAL_TOL => -1.0,
                State::Zero if d.abs() > DUAL_TOL => {
                    if d < 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, w: &[f64], bland: bool) -> Step {
        let range = if dir > 0.0 {
            self.upper[q] - self.x[q]
        } else {
            self.x[q] - self.lower[q]
        };
        let ratio = |r: usize, relax: f64| -> Option<(f64, f64)> {
            let alpha = dir * w[r];
            if alpha.abs() <= PIVOT_TOL {
                return None;
            }
            let j = self.head[r];
            if alpha > 0.0 {
                let lo = self.lower[j];
                if lo.is_finite() {
                    return Some((((self.x[j] - lo + relax) / alpha).max(0.0), alpha));
                }
            } else {
                let hi = self.upper[j];
                if hi.is_finite() {
                    return Some((((hi - self.x[j] + relax) / -alpha).max(0.0), alpha));
                }
            }
            None
        };

        if bland {
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                if let Some((t, _)) = ratio(r, 0.0) {
                    best = match best {
                        None => Some((r, t)),
                        Some((br, bt)) => {
                            if t < bt - 1e-12 || (t <= bt + 1e-12 && self.head[r] < self.head[br]) {
                                Some((r, t))
                            } else {
                                Some((br, bt))
                            }
                        }
                    };
                }
            }
            return match best {
                Some((_, t)) if range <= t => Step::Flip(range),
                Some((row, theta)) => Step::Pivot { row, theta },
                None if range.is_finite() => Step::Flip(range),
                None => Step::Unbounded,
            };
        }

        let mut theta_max = f64::INFINITY;
        for r in 0..self.m {
            if let Some((t, _)) = ratio(r, PRIMAL_TOL) {
                theta_max = theta_max.min(t);
            }
        }
        if range <= theta_max {
            return if range.is_finite() {
                Step::Flip(range)
            } else {
                Step::Unbounded
            };
        }
        let mut best: Option<(usize, f64)> = None;
        let mut best_alpha = 0.0;
        for r in 0..self.m {
            if let Some((t, alpha)) = ratio(r, 0.0) {
                if t <= theta_max && alpha.abs() > best_alpha {
                    best_alpha = alpha.abs();
                    best = Some((r, t));
                }
            }
        }
        match best {
            Some((row, theta)) => Step::Pivot { row, theta },
            None => Step::Unbounded,
        }
    }

    fn iterate(&mut self) -> Outcome {
        let mut stall = 0usize;
        let mut bland = false;
        let mut w = core::mem::take(&mut self.work);
        let outcome = loop {
            if self.pfi.updates() >= REFACTOR_EVERY {
                self.refactor();
            }
            for r in 0..self.m {
                self.duals[r] = self.cost[self.head[r]];
            }
            self.pfi.btran(&mut self.duals);

            let Some((q, dir)) = self.price(bland) else {
                break Outcome::Optimal;
            };
            if self.iterations >= self.max_iters {
                break Outcome::IterationLimit;
            }
            self.iterations += 1;

            for v in w.iter_mut() {
                *v = 0.0;
            }
            for (r, v) in self.cols.column(q) {
                w[r] = v;
            }
            self.pfi.ftran(&mut w);

            let theta = match self.ratio_test(q, dir, &w, bland) {
                Step::Unbounded => break Outcome::Unbounded,
                Step::Flip(theta) => {
                    self.shift(q, dir, theta, &w);
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                    theta
                }
                Step::Pivot { row, theta } => {
                    self.shift(q, dir, theta, &w);
                    let leaving = self.head[row];
                    let alpha = dir * w[row];
                    if alpha > 0.0 {
                        self.state[leaving] = State::Lower;
                        self.x[leaving] = self.lower[leaving];
                    } else {
                        self.state[leaving] = State::Upper;
                        self.x[leaving] = self.upper[leaving];
                    }
                    self.state[q] = State::Basic;
                    self.head[row] = q;
                    self.pfi.update(row, &w);
                    theta
                }
            };

            if theta <= PRIMAL_TOL {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        };
        self.work = w;
        outcome
    }

    fn shift(&mut self, q: usize, dir: f64, theta: f64, w: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for r in 0..self.m {
            let wr = w[r];
            if wr != 0.0 {
                self.x[self.head[r]] -= dir * theta * wr;
            }
        }
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        if self.m > 0 && !self.x.is_empty() {
            self.refactor();
        }
        let mut primal = Vec::with_capacity(self.n);
        for (j, v) in self.problem.vars().iter().enumerate() {
            let mut xj = self.x.get(j).copied().unwrap_or(0.0) * self.col_scale[j];
            let snap = 1e-9 * (1.0 + xj.abs());
            if (xj - v.lower).abs() <= snap {
                xj = v.lower;
            } else if (xj - v.upper).abs() <= snap {
                xj = v.upper;
            }
            primal.push(xj);
        }
        let objective = self.problem.objective_value(&primal);
        LpSolution {
            status,
            objective,
            primal,
            iterations: self.iterations,
        }
    }
}
