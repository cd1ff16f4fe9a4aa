//! Product-form representation of a simplex basis inverse.
//!
//! `B^-1 = E_k ... E_1`, each `E_t` an elementary column transformation
//! ("eta") that differs from the identity only in its pivot column.

use alloc::vec;
use alloc::vec::Vec;

/// Entries smaller than this are not stored in an eta column.
const DROP_TOL: f64 = 1e-14;
/// Smallest acceptable pivot magnitude while reinverting.
const SINGULAR_TOL: f64 = 1e-11;
/// Threshold partial pivoting: candidates within this fraction of the
/// largest entry compete on sparsity.
const THRESHOLD: f64 = 0.1;

/// Compressed sparse columns.
#[derive(Debug, Clone, Default)]
pub(super) struct SparseColumns {
    pub start: Vec<usize>,
    pub row: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseColumns {
    pub fn new() -> Self {
        SparseColumns {
            start: vec![0],
            row: Vec::new(),
            val: Vec::new(),
        }
    }

    pub fn push_column<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        for (r, v) in entries {
            self.row.push(r);
            self.val.push(v);
        }
        self.start.push(self.row.len());
    }

    pub fn len(&self) -> usize {
        self.start.len() - 1
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.start[j], self.start[j + 1]);
        self.row[a..b].iter().copied().zip(self.val[a..b].iter().copied())
    }

    pub fn nnz(&self, j: usize) -> usize {
        self.start[j + 1] - self.start[j]
    }

    pub fn dot(&self, j: usize, y: &[f64]) -> f64 {
        let (a, b) = (self.start[j], self.start[j + 1]);
        let mut s = 0.0;
        for k in a..b {
            s += self.val[k] * y[self.row[k]];
        }
        s
    }
}

#[derive(Debug, Clone)]
pub(super) struct Pfi {
    m: usize,
    pivot: Vec<usize>,
    pivot_inv: Vec<f64>,
    start: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
    updates: usize,
}

/// Result of a reinversion: `head[r]` is the column now basic at row `r`;
/// `rejected` lists requested columns that were linearly dependent and
/// were replaced by the slack of an otherwise uncovered row.
pub(super) struct Reinversion {
    pub head: Vec<usize>,
    pub rejected: Vec<usize>,
}

impl Pfi {
    pub fn new(m: usize) -> Self {
        Pfi {
            m,
            pivot: Vec::new(),
            pivot_inv: Vec::new(),
            start: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
            updates: 0,
        }
    }

    /// Number of etas appended by simplex updates since the last reinversion.
    pub fn updates(&self) -> usize {
        self.updates
    }

    fn clear(&mut self) {
        self.pivot.clear();
        self.pivot_inv.clear();
        self.start.clear();
        self.start.push(0);
        self.idx.clear();
        self.val.clear();
        self.updates = 0;
    }

    /// `a <- B^-1 a`.
    pub fn ftran(&self, a: &mut [f64]) {
        for k in 0..self.pivot.len() {
            let p = self.pivot[k];
            let ap = a[p];
            if ap == 0.0 {
                continue;
            }
            a[p] = ap * self.pivot_inv[k];
            for t in self.start[k]..self.start[k + 1] {
                a[self.idx[t]] += self.val[t] * ap;
            }
        }
    }

    /// `y^T <- y^T B^-1`.
    pub fn btran(&self, y: &mut [f64]) {
        for k in (0..self.pivot.len()).rev() {
            let p = self.pivot[k];
            let mut s = y[p] * self.pivot_inv[k];
            for t in self.start[k]..self.start[k + 1] {
                s += self.val[t] * y[self.idx[t]];
            }
            y[p] = s;
        }
    }

    fn push(&mut self, p: usize, w: &[f64]) {
        let wp = w[p];
        let inv = 1.0 / wp;
        for (i, &wi) in w.iter().enumerate() {
            if i != p && wi.abs() > DROP_TOL {
                self.idx.push(i);
                self.val.push(-wi * inv);
            }
        }
        self.pivot.push(p);
        self.pivot_inv.push(inv);
        self.start.push(self.idx.len());
    }

    /// Appends the eta of a basis change: `w = B^-1 a_q` enters at row `r`.
    pub fn update(&mut self, r: usize, w: &[f64]) {
        self.push(r, w);
        self.updates += 1;
    }

    /// Rebuilds the factorisation for the basis formed by `basic` columns
    /// (one per row, in any order). `slack_of(r)` is the column index of the
    /// unit slack for row `r`.
    pub fn reinvert(
        &mut self,
        cols: &SparseColumns,
        basic: &[usize],
        slack_of: impl Fn(usize) -> usize,
    ) -> Reinversion {
        let m = self.m;
        self.clear();
        let mut head = vec![usize::MAX; m];
        let mut pivoted = vec![false; m];
        let mut general = Vec::new();

        for &j in basic {
            if cols.nnz(j) == 1 {
                let (r, v) = cols.column(j).next().unwrap();
                if !pivoted[r] && v.abs() > SINGULAR_TOL {
                    pivoted[r] = true;
                    head[r] = j;
                    if v != 1.0 {
                        self.pivot.push(r);
                        self.pivot_inv.push(1.0 / v);
                        self.start.push(self.idx.len());
                    }
                    continue;
                }
            }
            general.push(j);
        }

        // Remaining columns, sparsest (in uncovered rows) first.
        let active = |j: usize, pivoted: &[bool]| cols.column(j).filter(|&(r, _)| !pivoted[r]).count();
        general.sort_by_key(|&j| (active(j, &pivoted), j));
        let mut row_count = vec![0usize; m];
        for &j in &general {
            for (r, _) in cols.column(j) {
                row_count[r] += 1;
            }
        }

        let mut w = vec![0.0; m];
        let mut rejected = Vec::new();
        for &j in &general {
            for x in w.iter_mut() {
                *x = 0.0;
            }
            for (r, v) in cols.column(j) {
                w[r] = v;
                row_count[r] -= 1;
            }
            self.ftran(&mut w);
            let mut max_abs = 0.0f64;
            for r in 0..m {
                if !pivoted[r] {
                    max_abs = max_abs.max(w[r].abs());
                }
            }
            if max_abs <= SINGULAR_TOL {
                rejected.push(j);
                continue;
            }
            let mut best = usize::MAX;
            let mut best_key = (usize::MAX, 0.0f64);
            for r in 0..m {
                if pivoted[r] || w[r].abs() < THRESHOLD * max_abs {
                    continue;
                }
                let key = (row_count[r], w[r].abs());
                if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 > best_key.1) {
                    best_key = key;
                    best = r;
                }
            }
            pivoted[best] = true;
            head[best] = j;
            self.push(best, &w);
        }

        for r in 0..m {
            if !pivoted[r] {
                head[r] = slack_of(r);
            }
        }
        Reinversion { head, rejected }
    }
}
