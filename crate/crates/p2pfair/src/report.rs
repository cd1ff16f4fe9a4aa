//! Result tables.
//!
//! A [`RunSummary`] is a per-slot table with a footer row: column sums for
//! unfairness and sweep tables, column means for timing tables. Tables
//! render as TSV with fixed-point numbers and `.` decimals; a trailing
//! `flag` column names the highlighted cell of each row (the arg-max pair,
//! or the plateau point of a sweep).

use std::fmt::Write as _;

use p2pfair_core::fairness::UnfairnessReport;

/// Sweep plateaus ignore D_max changes up to this many kWh.
pub const PLATEAU_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub decimals: usize,
}

impl Column {
    pub fn new(name: impl Into<String>, decimals: usize) -> Self {
        Column {
            name: name.into(),
            decimals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Footer {
    Totals,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub hour: usize,
    pub values: Vec<f64>,
    /// Column index of the highlighted cell.
    pub flag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub columns: Vec<Column>,
    pub rows: Vec<SummaryRow>,
    pub footer_kind: Footer,
    pub footer: Vec<f64>,
    pub footer_flag: Option<usize>,
    /// Sweep points (ε or plant kW) when the columns are a sweep axis.
    pub axis: Option<Vec<f64>>,
}

fn footer_of(rows: &[SummaryRow], width: usize, kind: Footer) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for r in rows {
        for (o, v) in out.iter_mut().zip(&r.values) {
            *o += v;
        }
    }
    if kind == Footer::Mean && !rows.is_empty() {
        for o in &mut out {
            *o /= rows.len() as f64;
        }
    }
    out
}

/// Fixed-point with `decimals` places; negative zero prints as zero.
pub fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

impl RunSummary {
    fn new(columns: Vec<Column>, rows: Vec<SummaryRow>, footer_kind: Footer) -> Self {
        let footer = footer_of(&rows, columns.len(), footer_kind);
        RunSummary {
            columns,
            rows,
            footer_kind,
            footer,
            footer_flag: None,
            axis: None,
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("hour");
        for c in &self.columns {
            let _ = write!(out, "\t{}", c.name);
        }
        out.push_str("\tflag\n");
        let mut line = |label: &str, values: &[f64], flag: Option<usize>| {
            out.push_str(label);
            for (c, v) in self.columns.iter().zip(values) {
                let _ = write!(out, "\t{}", fixed(*v, c.decimals));
            }
            let _ = writeln!(out, "\t{}", flag.map_or("-", |k| self.columns[k].name.as_str()));
        };
        for r in &self.rows {
            line(&format!("{:02}", r.hour), &r.values, r.flag);
        }
        let label = match self.footer_kind {
            Footer::Totals => "total",
            Footer::Mean => "mean",
        };
        line(label, &self.footer, self.footer_flag);
        out
    }
}

/// One slot's unfairness measurement and the per-group profits behind it.
#[derive(Debug, Clone)]
pub struct SlotUnfairness<'a> {
    pub hour: usize,
    pub report: &'a UnfairnessReport,
    pub group_profits: &'a [f64],
    /// Alternating iterations; `None` for reference clearings.
    pub iterations: Option<usize>,
}

fn pair_name(names: &[String], a: usize, b: usize) -> String {
    format!("d_{}{}", names[a], names[b])
}

/// Pairwise distances, D_max and group profits per slot, the arg-max pair
/// flagged, with a totals row whose flag is the pair of largest total.
pub fn unfairness_table(slots: &[SlotUnfairness<'_>], class_names: &[String]) -> RunSummary {
    let k = class_names.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
    let mut columns: Vec<Column> = pairs.iter().map(|&(a, b)| Column::new(pair_name(class_names, a, b), 2)).collect();
    columns.push(Column::new("D_max", 2));
    columns.extend(class_names.iter().map(|n| Column::new(format!("profit_{n}"), 4)));
    let with_iterations = slots.iter().any(|s| s.iterations.is_some());
    if with_iterations {
        columns.push(Column::new("iterations", 0));
    }
    let rows = slots
        .iter()
        .map(|s| {
            let mut values: Vec<f64> = pairs.iter().map(|&(a, b)| s.report.distance(a, b).unwrap_or(0.0)).collect();
            values.push(s.report.d_max);
            values.extend(s.group_profits.iter().copied());
            if with_iterations {
                values.push(s.iterations.unwrap_or(0) as f64);
            }
            // An idle slot (all distances zero) has no arg-max.
            let flag = s
                .report
                .argmax
                .filter(|_| s.report.d_max > 0.0)
                .and_then(|(a, b)| pairs.iter().position(|&p| p == (a, b)));
            SummaryRow {
                hour: s.hour,
                values,
                flag,
            }
        })
        .collect();
    let mut table = RunSummary::new(columns, rows, Footer::Totals);
    table.footer_flag = argmax_first(&table.footer[..pairs.len()]);
    table
}

/// Index of the largest value, first on ties; `None` when all are zero.
fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v > 0.0 && best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// First sweep index after which D_max never drops by more than `tol`;
/// `None` when the series is still improving at its last point.
pub fn plateau_index(series: &[f64], tol: f64) -> Option<usize> {
    let k = (0..series.len()).find(|&k| series[k + 1..].iter().all(|&later| series[k] - later <= tol))?;
    (k + 1 < series.len()).then_some(k)
}

/// D_max per slot and sweep point, plateau flagged per slot.
/// `d_max[h][p]` is slot `h`'s value at `axis[p]`.
pub fn sweep_table(hours: &[usize], axis: &[f64], labels: &[String], d_max: &[Vec<f64>], tol: f64) -> RunSummary {
    let columns = labels.iter().map(|l| Column::new(l.clone(), 2)).collect();
    let rows = hours
        .iter()
        .zip(d_max)
        .map(|(&hour, series)| SummaryRow {
            hour,
            values: series.clone(),
            flag: plateau_index(series, tol),
        })
        .collect();
    let mut table = RunSummary::new(columns, rows, Footer::Totals);
    table.footer_flag = plateau_index(&table.footer, tol);
    table.axis = Some(axis.to_vec());
    table
}

/// Wall seconds per slot: the reference clearing, then one column per run.
pub fn timing_table(hours: &[usize], reference: &[f64], runs: &[(String, Vec<f64>)]) -> RunSummary {
    let mut columns = vec![Column::new("ref", 3)];
    columns.extend(runs.iter().map(|(l, _)| Column::new(l.clone(), 3)));
    let rows = hours
        .iter()
        .enumerate()
        .map(|(i, &hour)| {
            let mut values = vec![reference[i]];
            values.extend(runs.iter().map(|(_, t)| t[i]));
            SummaryRow { hour, values, flag: None }
        })
        .collect();
    RunSummary::new(columns, rows, Footer::Mean)
}
