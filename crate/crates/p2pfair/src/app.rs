//! Command-line driver.
//!
//! Every command writes its inputs and solutions under `--out`, records them
//! in `manifest.tsv`, then builds its tables by reading those files back:
//! `report` runs the same table step on an existing output directory and
//! reproduces the tables byte for byte.
//!
//! ```text
//! out/
//!   manifest.tsv                    table sweep axis hour scenario trades peers trace
//!   timing.tsv                      wall seconds (the only nondeterministic file)
//!   unfairness_ref.tsv              reference clearing, per slot
//!   unfairness_eps_<E>.tsv          fair clearing at ε = E %
//!   sweep_epsilon.tsv, sweep_pv.tsv
//!   scenario/                       grid, settings, peers, curves, tariffs
//!   ref/hHH_{trades,peers}.tsv
//!   fair/eps_<E>/hHH_{trades,peers,trace}.tsv
//!   pv_<C>/...                      one scenario/ref/fair tree per plant size
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use p2pfair_core::clearing::{compute_revenue, AlternatingOptions, ClearingSolution, FairOutcome};
use p2pfair_core::lp::SolveOptions;
use p2pfair_core::scenario::{generate, Scenario, ScenarioSpec, TariffKind, HOURS};
use serde::{Deserialize, Serialize};

use crate::config::{load_scenario, LoadedScenario};
use crate::error::{AppError, AppResult};
use crate::formats::{
    peer_results_text, read_scenario, read_solution, read_text, records, trace_text, trades_text, write_scenario,
    write_text,
};
use crate::report::{sweep_table, timing_table, unfairness_table, RunSummary, SlotUnfairness, PLATEAU_TOL};
use crate::run::{carried_over, reference_report, run_fair, run_reference, FairRun, ReferenceRun};

#[derive(Debug, Parser)]
#[command(name = "p2pfair", version, about = "Peer-to-peer market clearing with group fairness on radial feeders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear every slot for maximum seller margin.
    ClearRef {
        #[command(flatten)]
        common: Common,
    },
    /// Reference clearing, then the fair model at one sacrifice level.
    ClearFair {
        #[command(flatten)]
        common: Common,
        /// Sacrifice level in percent of each group's reference profit.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        fair: FairFlags,
    },
    /// Fair clearing over a grid of sacrifice levels, each run warm-started
    /// from the previous one.
    SweepEpsilon {
        #[command(flatten)]
        common: Common,
        /// Sacrifice levels in percent.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50,70,100")]
        grid: Vec<f64>,
        #[command(flatten)]
        fair: FairFlags,
    },
    /// Fair clearing with a community PV plant of each size. Sizes are kW
    /// for the 1600-household reference community and are scaled to the
    /// scenario's household count.
    SweepPv {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20")]
        capacities: Vec<f64>,
        /// Sacrifice level in percent.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        fair: FairFlags,
    },
    /// Rebuild the tables of an output directory from its exported files
    /// into `<out>/report/`.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Slots to clear: `H` or `H1..H2` (inclusive). All 24 by default.
    #[arg(long)]
    pub hours: Option<Hours>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FairFlags {
    /// Convergence tolerance on |D¹ − D²|, kWh.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hours(pub Vec<usize>);

impl FromStr for Hours {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let hour = |t: &str| -> Result<usize, String> {
            let h: usize = t.trim().parse().map_err(|_| format!("bad hour {t:?}"))?;
            if h < HOURS {
                Ok(h)
            } else {
                Err(format!("hour {h} is not in 0..=23"))
            }
        };
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (hour(a)?, hour(b)?),
            None => (hour(s)?, hour(s)?),
        };
        if lo > hi {
            return Err(format!("empty hour range {s}"));
        }
        Ok(Hours((lo..=hi).collect()))
    }
}

/// One exported solution and the table cell it feeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub table: String,
    pub sweep: String,
    pub axis: String,
    pub hour: usize,
    pub scenario: String,
    pub trades: String,
    pub peers: String,
    pub trace: String,
}

const NONE: &str = "-";

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::ClearRef { common } => {
            let job = Job::new(&common)?;
            let (scenario, refs) = job.reference(&job.loaded.spec, "")?;
            let mut manifest = Vec::new();
            job.record_reference(&mut manifest, "", &scenario, &refs, "unfairness_ref.tsv")?;
            job.finish(&manifest, &refs, &[])
        }
        Command::ClearFair { common, epsilon, fair } => {
            let job = Job::new(&common)?;
            let eps = epsilon.unwrap_or(100.0 * job.loaded.file.fair.epsilon);
            let (scenario, refs) = job.reference(&job.loaded.spec, "")?;
            let runs = job.fair(&scenario, &refs, &[eps], &fair, None)?;
            let mut manifest = Vec::new();
            job.record_reference(&mut manifest, "", &scenario, &refs, "unfairness_ref.tsv")?;
            let label = eps_label(eps);
            let table = format!("unfairness_{label}.tsv");
            job.record_fair(&mut manifest, "", &scenario, &runs, 0, &label, &[(table, None)])?;
            let timings = vec![(label, fair_times(&runs, 0))];
            job.finish(&manifest, &refs, &timings)?;
            not_converged(&runs)
        }
        Command::SweepEpsilon { common, grid, fair } => {
            let job = Job::new(&common)?;
            let mut grid = grid;
            check_levels(&grid, "sacrifice levels")?;
            grid.sort_by(f64::total_cmp);
            let (scenario, refs) = job.reference(&job.loaded.spec, "")?;
            let runs = job.fair(&scenario, &refs, &grid, &fair, None)?;
            let mut manifest = Vec::new();
            job.record_reference(&mut manifest, "", &scenario, &refs, "unfairness_ref.tsv")?;
            let mut timings = Vec::new();
            for (k, &eps) in grid.iter().enumerate() {
                let label = eps_label(eps);
                let sweep = Some((label.clone(), fmt_num(eps)));
                let tables = [(String::from("sweep_epsilon.tsv"), sweep)];
                job.record_fair(&mut manifest, "", &scenario, &runs, k, &label, &tables)?;
                timings.push((label, fair_times(&runs, k)));
            }
            job.finish(&manifest, &refs, &timings)?;
            not_converged(&runs)
        }
        Command::SweepPv {
            common,
            capacities,
            epsilon,
            fair,
        } => {
            let job = Job::new(&common)?;
            check_levels(&capacities, "plant capacities")?;
            let eps = epsilon.unwrap_or(100.0 * job.loaded.file.fair.epsilon);
            let mut manifest = Vec::new();
            let mut timings = Vec::new();
            let mut first_refs = None;
            let mut previous = None;
            let mut unconverged = 0;
            for &cap in &capacities {
                let prefix = format!("pv_{}/", fmt_num(cap));
                let (scenario, refs) = job.reference(&job.loaded.with_plant(cap), &prefix)?;
                let warm = previous.as_deref().and_then(|prev| carried_over(&scenario, prev, 0));
                let runs = job.fair(&scenario, &refs, &[eps], &fair, warm.as_deref())?;
                job.record_reference(&mut manifest, &prefix, &scenario, &refs, "")?;
                let label = eps_label(eps);
                let sweep = Some((format!("pv_{}", fmt_num(cap)), fmt_num(cap)));
                job.record_fair(&mut manifest, &prefix, &scenario, &runs, 0, &label, &[(String::from("sweep_pv.tsv"), sweep)])?;
                timings.push((format!("pv_{}", fmt_num(cap)), fair_times(&runs, 0)));
                unconverged += count_unconverged(&runs);
                first_refs.get_or_insert(refs);
                previous = Some(runs);
            }
            job.finish(&manifest, first_refs.as_deref().unwrap_or(&[]), &timings)?;
            match unconverged {
                0 => Ok(()),
                count => Err(AppError::NotConverged { count }),
            }
        }
        Command::Report { out } => {
            let manifest = read_manifest(&out)?;
            write_tables(&out, &manifest, &out.join("report"))
        }
    }
}

struct Job {
    loaded: LoadedScenario,
    hours: Vec<usize>,
    out: PathBuf,
    lp: SolveOptions,
}

impl Job {
    fn new(common: &Common) -> AppResult<Self> {
        let mut loaded = load_scenario(&common.scenario)?;
        if let Some(seed) = common.seed {
            loaded.spec.seed = seed;
        }
        let hours = common.hours.clone().map_or_else(|| (0..HOURS).collect(), |h| h.0);
        Ok(Job {
            loaded,
            hours,
            out: common.out.clone(),
            lp: SolveOptions::default(),
        })
    }

    fn reference(&self, spec: &ScenarioSpec, prefix: &str) -> AppResult<(Scenario, Vec<ReferenceRun>)> {
        let scenario = generate(spec)?;
        let dir = self.out.join(prefix).join("scenario");
        write_scenario(&dir, &scenario)?;
        write_text(&dir.join("curves.tsv"), &curves_text(&scenario))?;
        write_text(&dir.join("tariffs.tsv"), &tariffs_text(spec))?;
        let refs = run_reference(&scenario, &self.hours, &self.lp)?;
        Ok((scenario, refs))
    }

    fn fair(
        &self,
        scenario: &Scenario,
        refs: &[ReferenceRun],
        levels: &[f64],
        flags: &FairFlags,
        warm: Option<&[ClearingSolution]>,
    ) -> AppResult<Vec<FairRun>> {
        let f = &self.loaded.file.fair;
        let opts = AlternatingOptions {
            tol: flags.tol.unwrap_or(f.tol),
            iter_cap: flags.max_iter.unwrap_or(f.max_iter),
            lp: self.lp,
        };
        let fractions: Vec<f64> = levels.iter().map(|e| e / 100.0).collect();
        let mut runs = run_fair(scenario, refs, &fractions, &opts, warm)?;
        // A failed (slot, ε) run fails the command.
        if let Some(k) = runs.iter().position(|r| r.outcomes.iter().any(Result::is_err)) {
            let failed = runs.swap_remove(k).outcomes.into_iter().find_map(Result::err);
            return Err(failed.expect("position found an error").into());
        }
        Ok(runs)
    }

    fn record_reference(
        &self,
        manifest: &mut Vec<ManifestRow>,
        prefix: &str,
        scenario: &Scenario,
        refs: &[ReferenceRun],
        table: &str,
    ) -> AppResult<()> {
        for r in refs {
            let base = format!("{prefix}ref/h{:02}", r.hour);
            let row = self.export(prefix, &base, scenario, r.hour, &r.solution, None, table, &None)?;
            // An empty table name exports without feeding a table.
            if !table.is_empty() {
                manifest.push(row);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn record_fair(
        &self,
        manifest: &mut Vec<ManifestRow>,
        prefix: &str,
        scenario: &Scenario,
        runs: &[FairRun],
        level: usize,
        label: &str,
        tables: &[(String, Option<(String, String)>)],
    ) -> AppResult<()> {
        for run in runs {
            let outcome = outcome(run, level);
            let base = format!("{prefix}fair/{label}/h{:02}", run.hour);
            for (table, sweep) in tables {
                let row = self.export(prefix, &base, scenario, run.hour, &outcome.solution, Some(outcome), table, sweep)?;
                manifest.push(row);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn export(
        &self,
        prefix: &str,
        base: &str,
        scenario: &Scenario,
        hour: usize,
        solution: &ClearingSolution,
        fair: Option<&FairOutcome>,
        table: &str,
        sweep: &Option<(String, String)>,
    ) -> AppResult<ManifestRow> {
        let peers = scenario.peers(hour);
        let revenue = compute_revenue(solution, peers, &scenario.partition);
        let trades = format!("{base}_trades.tsv");
        let results = format!("{base}_peers.tsv");
        write_text(&self.out.join(&trades), &trades_text(solution, peers))?;
        write_text(&self.out.join(&results), &peer_results_text(solution, peers, &revenue))?;
        let trace = match fair {
            Some(o) => {
                let path = format!("{base}_trace.tsv");
                write_text(&self.out.join(&path), &trace_text(&o.trace, &scenario.class_names))?;
                path
            }
            None => NONE.into(),
        };
        let (sweep, axis) = sweep.clone().unwrap_or_else(|| (NONE.into(), NONE.into()));
        Ok(ManifestRow {
            table: table.into(),
            sweep,
            axis,
            hour,
            scenario: format!("{prefix}scenario"),
            trades,
            peers: results,
            trace,
        })
    }

    fn finish(&self, manifest: &[ManifestRow], refs: &[ReferenceRun], runs: &[(String, Vec<f64>)]) -> AppResult<()> {
        write_manifest(&self.out, manifest)?;
        let ref_times: Vec<f64> = refs.iter().map(|r| r.wall_s).collect();
        let hours: Vec<usize> = refs.iter().map(|r| r.hour).collect();
        write_text(&self.out.join("timing.tsv"), &timing_table(&hours, &ref_times, runs).to_tsv())?;
        write_tables(&self.out, manifest, &self.out)
    }
}

fn outcome(run: &FairRun, level: usize) -> &FairOutcome {
    match &run.outcomes[level] {
        Ok(o) => o,
        Err(_) => unreachable!("failed runs are rejected before export"),
    }
}

fn fair_times(runs: &[FairRun], level: usize) -> Vec<f64> {
    runs.iter()
        .map(|r| outcome(r, level).trace.last().map_or(0.0, |t| t.wall_s))
        .collect()
}

fn count_unconverged(runs: &[FairRun]) -> usize {
    runs.iter()
        .flat_map(|r| &r.outcomes)
        .filter(|o| matches!(o, Ok(o) if !o.converged))
        .count()
}

fn not_converged(runs: &[FairRun]) -> AppResult<()> {
    match count_unconverged(runs) {
        0 => Ok(()),
        count => Err(AppError::NotConverged { count }),
    }
}

fn check_levels(values: &[f64], what: &str) -> AppResult<()> {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(AppError::BadInput(format!("{what} must be a nonempty list of nonnegative numbers")));
    }
    Ok(())
}

/// Shortest round-trip decimal.
fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn eps_label(percent: f64) -> String {
    format!("eps_{}", fmt_num(percent))
}

/// Community totals per hour: load, PV output and the surplus of net
/// producers, kWh.
pub fn curves_text(scenario: &Scenario) -> String {
    let mut out = String::from("hour\tconsumption\tproduction\tsurplus\n");
    for h in 0..HOURS {
        let peers = scenario.peers(h);
        let c: f64 = peers.iter().map(|p| p.consumption).sum();
        let e: f64 = peers.iter().map(|p| p.production).sum();
        let s: f64 = peers.iter().map(|p| (p.production - p.consumption).max(0.0)).sum();
        let _ = writeln!(out, "{h}\t{c}\t{e}\t{s}");
    }
    out
}

/// Retail price per contract and the buyback rate, €/kWh.
pub fn tariffs_text(spec: &ScenarioSpec) -> String {
    let mut out = String::from("hour");
    for kind in TariffKind::ALL {
        let _ = write!(out, "\t{}", kind.name());
    }
    out.push_str("\tbuyback\n");
    for h in 0..HOURS {
        let _ = write!(out, "{h}");
        for kind in TariffKind::ALL {
            let _ = write!(out, "\t{}", spec.tariffs.get(kind).retail(h));
        }
        let _ = writeln!(out, "\t{}", spec.tariffs.flat.buyback());
    }
    out
}

pub fn write_manifest(out: &Path, rows: &[ManifestRow]) -> AppResult<()> {
    let path = out.join("manifest.tsv");
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AppError::format(&path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::format(&path, e.error()))?;
    write_text(&path, &String::from_utf8_lossy(&bytes))
}

pub fn read_manifest(out: &Path) -> AppResult<Vec<ManifestRow>> {
    let path = out.join("manifest.tsv");
    records(&path, &read_text(&path)?)
}

/// Builds every table named in `manifest` from the files under `root` and
/// writes them to `dest`.
pub fn write_tables(root: &Path, manifest: &[ManifestRow], dest: &Path) -> AppResult<()> {
    let mut scenarios: HashMap<&str, Scenario> = HashMap::new();
    for r in manifest {
        if !scenarios.contains_key(r.scenario.as_str()) {
            scenarios.insert(&r.scenario, read_scenario(&root.join(&r.scenario))?);
        }
    }
    let mut names: Vec<&str> = Vec::new();
    for r in manifest {
        if !names.contains(&r.table.as_str()) {
            names.push(&r.table);
        }
    }
    for name in names {
        let rows: Vec<&ManifestRow> = manifest.iter().filter(|r| r.table == name).collect();
        let table = if name.starts_with("sweep_") {
            sweep_from(root, &rows, &scenarios)?
        } else {
            unfairness_from(root, &rows, &scenarios)?
        };
        write_text(&dest.join(name), &table.to_tsv())?;
    }
    Ok(())
}

struct Loaded<'a> {
    scenario: &'a Scenario,
    solution: ClearingSolution,
    iterations: Option<usize>,
}

fn load_row<'a>(root: &Path, row: &ManifestRow, scenarios: &'a HashMap<&str, Scenario>) -> AppResult<Loaded<'a>> {
    let scenario = &scenarios[row.scenario.as_str()];
    let peers = scenario.peers(row.hour);
    let solution = read_solution(&root.join(&row.trades), &root.join(&row.peers), peers)?;
    let iterations = if row.trace == NONE {
        None
    } else {
        let path = root.join(&row.trace);
        let text = read_text(&path)?;
        Some(text.lines().skip(1).filter(|l| !l.trim().is_empty()).count())
    };
    Ok(Loaded {
        scenario,
        solution,
        iterations,
    })
}

fn unfairness_from(root: &Path, rows: &[&ManifestRow], scenarios: &HashMap<&str, Scenario>) -> AppResult<RunSummary> {
    let mut reports = Vec::with_capacity(rows.len());
    let mut profits = Vec::with_capacity(rows.len());
    let mut iterations = Vec::with_capacity(rows.len());
    let mut class_names: &[String] = &[];
    for row in rows {
        let l = load_row(root, row, scenarios)?;
        class_names = &l.scenario.class_names;
        reports.push(reference_report(l.scenario, &l.solution)?);
        profits.push(compute_revenue(&l.solution, l.scenario.peers(row.hour), &l.scenario.partition).per_group);
        iterations.push(l.iterations);
    }
    let slots: Vec<SlotUnfairness<'_>> = rows
        .iter()
        .enumerate()
        .map(|(k, row)| SlotUnfairness {
            hour: row.hour,
            report: &reports[k],
            group_profits: &profits[k],
            iterations: iterations[k],
        })
        .collect();
    Ok(unfairness_table(&slots, class_names))
}

fn sweep_from(root: &Path, rows: &[&ManifestRow], scenarios: &HashMap<&str, Scenario>) -> AppResult<RunSummary> {
    let mut labels: Vec<String> = Vec::new();
    let mut axis: Vec<f64> = Vec::new();
    let mut hours: Vec<usize> = Vec::new();
    for r in rows {
        if !labels.contains(&r.sweep) {
            labels.push(r.sweep.clone());
            let v: f64 = r
                .axis
                .parse()
                .map_err(|_| AppError::format(root.join("manifest.tsv"), format!("bad axis value {:?}", r.axis)))?;
            axis.push(v);
        }
        if !hours.contains(&r.hour) {
            hours.push(r.hour);
        }
    }
    let mut d_max = vec![vec![0.0; labels.len()]; hours.len()];
    for r in rows {
        let l = load_row(root, r, scenarios)?;
        let h = hours.iter().position(|&h| h == r.hour).unwrap_or_default();
        let p = labels.iter().position(|s| *s == r.sweep).unwrap_or_default();
        d_max[h][p] = reference_report(l.scenario, &l.solution)?.d_max;
    }
    Ok(sweep_table(&hours, &axis, &labels, &d_max, PLATEAU_TOL))
}
