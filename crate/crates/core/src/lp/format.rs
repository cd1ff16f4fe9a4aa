//! Plain-text dump of an [`LpProblem`] in a CPLEX-LP-like layout, for
//! cross-checking against external solvers.
//!
//! ```text
//! \ p2pfair lp dump: <vars> variables, <rows> constraints
//! maximize            (or minimize)
//!  obj: +1 x0 -2 x1
//! subject to
//!  c0: +1 x0 +1 x1 <= 4
//! bounds
//!  0 <= x0 <= 3
//!  x1 free
//!  -inf <= x2 <= 5
//! end
//! ```
//!
//! Variables are named `x<index>` and constraints `c<index>`, one item per
//! line. Coefficients use Rust's shortest round-trip float formatting.

use core::fmt;

use super::{LpProblem, Sense};

pub struct LpFormat<'a> {
    problem: &'a LpProblem,
}

impl<'a> LpFormat<'a> {
    pub(super) fn new(problem: &'a LpProblem) -> Self {
        LpFormat { problem }
    }
}

fn term(f: &mut fmt::Formatter<'_>, coeff: f64, var: usize) -> fmt::Result {
    if coeff < 0.0 {
        write!(f, " -{} x{}", -coeff, var)
    } else {
        write!(f, " +{} x{}", coeff, var)
    }
}

impl fmt::Display for LpFormat<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.problem;
        writeln!(
            f,
            "\\ p2pfair lp dump: {} variables, {} constraints",
            p.num_vars(),
            p.num_constraints()
        )?;
        writeln!(
            f,
            "{}",
            match p.sense() {
                Sense::Minimize => "minimize",
                Sense::Maximize => "maximize",
            }
        )?;
        write!(f, " obj:")?;
        let mut any = false;
        for (j, v) in p.vars().iter().enumerate() {
            if v.objective != 0.0 {
                term(f, v.objective, j)?;
                any = true;
            }
        }
        if !any {
            write!(f, " 0")?;
        }
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for (i, c) in p.constraints().iter().enumerate() {
            write!(f, " c{}:", i)?;
            if c.coeffs.is_empty() {
                write!(f, " 0 x0")?;
            }
            for &(v, a) in &c.coeffs {
                term(f, a, v.index())?;
            }
            writeln!(f, " {} {}", c.relation, c.rhs)?;
        }
        writeln!(f, "bounds")?;
        for (j, v) in p.vars().iter().enumerate() {
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => writeln!(f, " x{} free", j)?,
                (true, true) => writeln!(f, " {} <= x{} <= {}", v.lower, j, v.upper)?,
                (true, false) => writeln!(f, " x{} >= {}", j, v.lower)?,
                (false, true) => writeln!(f, " -inf <= x{} <= {}", j, v.upper)?,
            }
        }
        writeln!(f, "end")
    }
}
