//! Radial feeders under the LinDistFlow approximation.
//!
//! Squared voltage magnitudes `v` respond linearly to nodal active and
//! reactive injections `p`, `q` (per unit, positive = injection into the
//! grid):
//!
//! ```text
//! v = v0·1 + R p + Xs q,   R = 2 A⁻¹ D_r A⁻ᵀ,   Xs = 2 A⁻¹ D_x A⁻ᵀ
//! ```
//!
//! `A` is the reduced line-bus incidence matrix (one row per line, one column
//! per non-substation bus), `D_r`, `D_x` hold line resistances and
//! reactances. Line losses are neglected and branch flows are not limited.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, GridError, Result};
use crate::lp::Relation;

/// A bus and the line that feeds it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bus {
    pub id: usize,
    /// `None` only for the substation.
    pub parent: Option<usize>,
    /// Resistance of the line to the parent, per unit.
    pub r: f64,
    /// Reactance of the line to the parent, per unit.
    pub x: f64,
}

/// One side of a bus voltage limit, as a linear row over nodal injections:
/// `coeff_p · p + coeff_q · q  (relation)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageRow {
    /// Position of the constrained bus in [`GridModel::buses`].
    pub bus: usize,
    pub coeff_p: Vec<f64>,
    pub coeff_q: Vec<f64>,
    pub relation: Relation,
    /// May be infinite when the corresponding bound is; such rows never bind.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    substation: usize,
    /// Non-substation bus ids, topologically ordered from the substation.
    buses: Vec<usize>,
    position: BTreeMap<usize, usize>,
    /// Position of each bus's parent, `None` when the parent is the substation.
    parent: Vec<Option<usize>>,
    r: Vec<f64>,
    x: Vec<f64>,
    sens_r: Vec<f64>,
    sens_x: Vec<f64>,
    v0: f64,
    v_lo: f64,
    v_hi: f64,
    base_kva: f64,
}

/// Builds the sensitivity matrices of a radial grid.
///
/// `v0`, `v_lo`, `v_hi` are squared magnitudes; `base_kva` converts kW (or
/// kWh per hourly slot) to per unit.
pub fn build_grid(buses: &[Bus], v0: f64, v_lo: f64, v_hi: f64, base_kva: f64) -> Result<GridModel> {
    if !(v_lo < v0 && v0 < v_hi) || v0.is_nan() {
        return Err(GridError::BadVoltageBounds.into());
    }
    if !(base_kva > 0.0 && base_kva.is_finite()) {
        return Err(GridError::BadBase.into());
    }

    let mut by_id: BTreeMap<usize, &Bus> = BTreeMap::new();
    let mut substation = None;
    for b in buses {
        if by_id.insert(b.id, b).is_some() {
            return Err(GridError::DuplicateBus(b.id).into());
        }
        match b.parent {
            None => {
                if let Some(s) = substation {
                    return Err(GridError::MultipleSubstations(s, b.id).into());
                }
                substation = Some(b.id);
            }
            Some(_) => {
                if !(b.r >= 0.0 && b.x >= 0.0 && b.r.is_finite() && b.x.is_finite()) {
                    return Err(GridError::BadImpedance(b.id).into());
                }
            }
        }
    }
    let substation = substation.ok_or(GridError::NoSubstation)?;
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for b in buses {
        if let Some(p) = b.parent {
            if !by_id.contains_key(&p) {
                return Err(GridError::UnknownParent { bus: b.id, parent: p }.into());
            }
            children.entry(p).or_default().push(b.id);
        }
    }

    // Kahn's order with ties broken by smallest id.
    let mut order = Vec::with_capacity(buses.len().saturating_sub(1));
    let mut ready: BTreeSet<usize> = children.get(&substation).into_iter().flatten().copied().collect();
    while let Some(id) = ready.pop_first() {
        order.push(id);
        if let Some(ch) = children.get(&id) {
            ready.extend(ch.iter().copied());
        }
    }
    if order.len() + 1 != buses.len() {
        let placed: BTreeSet<usize> = order.iter().copied().chain([substation]).collect();
        let stray = *by_id.keys().find(|id| !placed.contains(id)).unwrap();
        // Follow parents from the stray bus until a bus repeats: that bus is on a cycle.
        let mut seen = BTreeSet::new();
        let mut cur = stray;
        while seen.insert(cur) {
            cur = by_id[&cur].parent.unwrap();
        }
        return Err(if cur == stray {
            GridError::Cycle(stray)
        } else {
            GridError::Disconnected(stray)
        }
        .into());
    }

    let position: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let n = order.len();
    let parent: Vec<Option<usize>> = order
        .iter()
        .map(|id| by_id[id].parent.and_then(|p| position.get(&p).copied()))
        .collect();
    let r: Vec<f64> = order.iter().map(|id| by_id[id].r).collect();
    let x: Vec<f64> = order.iter().map(|id| by_id[id].x).collect();

    // A is unit lower triangular in topological order (line k enters bus k and
    // leaves its parent), so Z = A⁻¹ follows by forward substitution:
    // Z[k][l] = δ_kl + Z[parent(k)][l].
    let mut z = vec![0.0; n * n];
    for k in 0..n {
        if let Some(p) = parent[k] {
            for l in 0..n {
                z[k * n + l] = z[p * n + l];
            }
        }
        z[k * n + k] = 1.0;
    }
    let sens = |d: &[f64]| {
        let mut s = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += z[a * n + l] * d[l] * z[b * n + l];
                }
                s[a * n + b] = 2.0 * acc;
                s[b * n + a] = 2.0 * acc;
            }
        }
        s
    };
    let sens_r = sens(&r);
    let sens_x = sens(&x);

    Ok(GridModel {
        substation,
        buses: order,
        position,
        parent,
        r,
        x,
        sens_r,
        sens_x,
        v0,
        v_lo,
        v_hi,
        base_kva,
    })
}

impl GridModel {
    pub fn substation(&self) -> usize {
        self.substation
    }

    /// Non-substation bus ids in matrix order.
    pub fn buses(&self) -> &[usize] {
        &self.buses
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Matrix position of bus `id`; `None` for the substation or unknown ids.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn contains(&self, id: usize) -> bool {
        id == self.substation || self.position.contains_key(&id)
    }

    /// Parent position of the bus at `pos`, `None` when fed by the substation.
    pub fn parent(&self, pos: usize) -> Option<usize> {
        self.parent[pos]
    }

    pub fn line_r(&self, pos: usize) -> f64 {
        self.r[pos]
    }

    pub fn line_x(&self, pos: usize) -> f64 {
        self.x[pos]
    }

    /// `R[a][b]`.
    pub fn r_sens(&self, a: usize, b: usize) -> f64 {
        self.sens_r[a * self.buses.len() + b]
    }

    /// `Xs[a][b]`.
    pub fn x_sens(&self, a: usize, b: usize) -> f64 {
        self.sens_x[a * self.buses.len() + b]
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn v_lo(&self) -> f64 {
        self.v_lo
    }

    pub fn v_hi(&self) -> f64 {
        self.v_hi
    }

    pub fn base_kva(&self) -> f64 {
        self.base_kva
    }

    /// Squared voltage at every non-substation bus, `v0 + R p + Xs q`.
    pub fn voltage_profile(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let n = self.buses.len();
        for len in [p.len(), q.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok((0..n)
            .map(|a| {
                let row = a * n;
                let mut v = self.v0;
                for b in 0..n {
                    v += self.sens_r[row + b] * p[b] + self.sens_x[row + b] * q[b];
                }
                v
            })
            .collect())
    }

    /// Two rows per non-substation bus (lower bound first), bus by bus in
    /// matrix order.
    pub fn voltage_constraint_rows(&self) -> Vec<VoltageRow> {
        let n = self.buses.len();
        let mut rows = Vec::with_capacity(2 * n);
        for a in 0..n {
            let coeff_p = self.sens_r[a * n..(a + 1) * n].to_vec();
            let coeff_q = self.sens_x[a * n..(a + 1) * n].to_vec();
            rows.push(VoltageRow {
                bus: a,
                coeff_p: coeff_p.clone(),
                coeff_q: coeff_q.clone(),
                relation: Relation::Ge,
                rhs: self.v_lo - self.v0,
            });
            rows.push(VoltageRow {
                bus: a,
                coeff_p,
                coeff_q,
                relation: Relation::Le,
                rhs: self.v_hi - self.v0,
            });
        }
        rows
    }
}
