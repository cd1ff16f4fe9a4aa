//! Tab-separated file formats.
//!
//! Every file is UTF-8 text with one header line naming the columns, then
//! one record per line. Lines starting with `#` are comments. Numbers use
//! `.` as decimal separator; exported solutions print floats in their
//! shortest round-trip form so re-import is exact.
//!
//! | file | columns |
//! |------|---------|
//! | grid topology | `from to r_pu x_pu`, one line segment per record |
//! | 24-hour series | `hour value` for hours 0–23 |
//! | profile shapes | `hour consumption pv` |
//! | peers (scenario export) | `hour id bus consumption production ask bid utility_sell utility_buy reactive group pv_kw pv_actor` |
//! | trades | `seller buyer kwh` with peer ids, nonzero trades only |
//! | peer results | `id group u_buy u_sell curtailment sold bought revenue` |
//! | iteration trace | `iter d1 d2 objective profit_<class>…` |
//!
//! An exported scenario is a directory holding `grid.tsv`, `settings.tsv`
//! (`key value`), `pv_shape.tsv` and `peers.tsv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use p2pfair_core::clearing::{ClearingSolution, IterationRecord, RevenueLedger};
use p2pfair_core::grid::{build_grid, Bus, GridModel};
use p2pfair_core::lp::LpStatus;
use p2pfair_core::market::{Peer, TradeMatrix};
use p2pfair_core::scenario::{ProfileShapes, Scenario, HOURS};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{AppError, AppResult};

pub fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub(crate) fn records<T: DeserializeOwned>(path: &Path, text: &str) -> AppResult<Vec<T>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| AppError::format(path, e))
}

#[derive(Deserialize)]
struct Segment {
    from: usize,
    to: usize,
    r_pu: f64,
    x_pu: f64,
}

/// Line segments to a bus list; the substation is the only `from` bus that
/// is never a `to` bus.
pub fn parse_topology(path: &Path, text: &str) -> AppResult<Vec<Bus>> {
    let segments: Vec<Segment> = records(path, text)?;
    let fed: std::collections::BTreeSet<usize> = segments.iter().map(|s| s.to).collect();
    let mut roots: Vec<usize> = segments.iter().map(|s| s.from).filter(|b| !fed.contains(b)).collect();
    roots.sort_unstable();
    roots.dedup();
    let [root] = roots[..] else {
        return Err(AppError::format(path, format!("expected one substation, found {roots:?}")));
    };
    let mut buses = vec![Bus { id: root, parent: None, r: 0.0, x: 0.0 }];
    buses.extend(segments.iter().map(|s| Bus {
        id: s.to,
        parent: Some(s.from),
        r: s.r_pu,
        x: s.x_pu,
    }));
    Ok(buses)
}

pub fn topology_text(grid: &GridModel) -> String {
    let mut out = String::from("from\tto\tr_pu\tx_pu\n");
    for (pos, &id) in grid.buses().iter().enumerate() {
        let from = grid.parent(pos).map_or(grid.substation(), |p| grid.buses()[p]);
        let _ = writeln!(out, "{from}\t{id}\t{}\t{}", grid.line_r(pos), grid.line_x(pos));
    }
    out
}

#[derive(Deserialize)]
struct HourValue {
    hour: usize,
    value: f64,
}

fn check_hours(path: &Path, hours: impl Iterator<Item = usize>) -> AppResult<()> {
    let mut seen = [false; HOURS];
    let mut count = 0;
    for h in hours {
        if h >= HOURS || std::mem::replace(&mut seen[h], true) {
            return Err(AppError::format(path, format!("hour {h} out of range or repeated")));
        }
        count += 1;
    }
    if count != HOURS {
        return Err(AppError::format(path, format!("expected {HOURS} hours, got {count}")));
    }
    Ok(())
}

pub fn parse_series(path: &Path, text: &str) -> AppResult<[f64; HOURS]> {
    let rows: Vec<HourValue> = records(path, text)?;
    check_hours(path, rows.iter().map(|r| r.hour))?;
    let mut out = [0.0; HOURS];
    for r in rows {
        out[r.hour] = r.value;
    }
    Ok(out)
}

pub fn series_text(values: &[f64; HOURS]) -> String {
    let mut out = String::from("hour\tvalue\n");
    for (h, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{h}\t{v}");
    }
    out
}

#[derive(Deserialize)]
struct ShapeRow {
    hour: usize,
    consumption: f64,
    pv: f64,
}

pub fn parse_shapes(path: &Path, text: &str) -> AppResult<ProfileShapes> {
    let rows: Vec<ShapeRow> = records(path, text)?;
    check_hours(path, rows.iter().map(|r| r.hour))?;
    let (mut c, mut pv) = ([0.0; HOURS], [0.0; HOURS]);
    for r in rows {
        c[r.hour] = r.consumption;
        pv[r.hour] = r.pv;
    }
    Ok(ProfileShapes::new(c, pv)?)
}

#[derive(Deserialize)]
struct PeerRow {
    hour: usize,
    id: usize,
    bus: usize,
    consumption: f64,
    production: f64,
    ask: f64,
    bid: f64,
    utility_sell: f64,
    utility_buy: f64,
    reactive: f64,
    group: usize,
    pv_kw: f64,
    pv_actor: u8,
}

#[derive(Deserialize)]
struct Setting {
    key: String,
    value: String,
}

pub fn write_scenario(dir: &Path, scenario: &Scenario) -> AppResult<()> {
    let g = &scenario.grid;
    write_text(&dir.join("grid.tsv"), &topology_text(g))?;
    let settings = format!(
        "key\tvalue\nv0\t{}\nv_lo\t{}\nv_hi\t{}\nbase_kva\t{}\nclasses\t{}\n",
        g.v0(),
        g.v_lo(),
        g.v_hi(),
        g.base_kva(),
        scenario.class_names.join(",")
    );
    write_text(&dir.join("settings.tsv"), &settings)?;
    write_text(&dir.join("pv_shape.tsv"), &series_text(&scenario.pv_shape))?;
    let mut peers = String::from(
        "hour\tid\tbus\tconsumption\tproduction\task\tbid\tutility_sell\tutility_buy\treactive\tgroup\tpv_kw\tpv_actor\n",
    );
    for (h, slot) in scenario.slots.iter().enumerate() {
        for p in slot {
            let _ = writeln!(
                peers,
                "{h}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.id,
                p.bus,
                p.consumption,
                p.production,
                p.ask,
                p.bid,
                p.utility_sell,
                p.utility_buy,
                p.reactive,
                p.group,
                p.pv_kw,
                u8::from(p.pv_actor)
            );
        }
    }
    write_text(&dir.join("peers.tsv"), &peers)
}

pub fn read_scenario(dir: &Path) -> AppResult<Scenario> {
    let grid_path = dir.join("grid.tsv");
    let buses = parse_topology(&grid_path, &read_text(&grid_path)?)?;
    let settings_path = dir.join("settings.tsv");
    let settings: Vec<Setting> = records(&settings_path, &read_text(&settings_path)?)?;
    let get = |key: &str| {
        settings
            .iter()
            .find(|s| s.key == key)
            .map(|s| s.value.clone())
            .ok_or_else(|| AppError::format(&settings_path, format!("missing key {key}")))
    };
    let num = |key: &str| -> AppResult<f64> {
        get(key)?
            .parse()
            .map_err(|e| AppError::format(&settings_path, format!("{key}: {e}")))
    };
    let grid = build_grid(&buses, num("v0")?, num("v_lo")?, num("v_hi")?, num("base_kva")?)?;
    let class_names: Vec<String> = get("classes")?.split(',').map(str::to_owned).collect();
    let shape_path = dir.join("pv_shape.tsv");
    let pv_shape = parse_series(&shape_path, &read_text(&shape_path)?)?;
    let peers_path = dir.join("peers.tsv");
    let rows: Vec<PeerRow> = records(&peers_path, &read_text(&peers_path)?)?;
    let mut slots: Vec<Vec<Peer>> = vec![Vec::new(); HOURS];
    for r in rows {
        let slot = slots
            .get_mut(r.hour)
            .ok_or_else(|| AppError::format(&peers_path, format!("hour {} out of range", r.hour)))?;
        slot.push(Peer {
            id: r.id,
            bus: r.bus,
            consumption: r.consumption,
            production: r.production,
            ask: r.ask,
            bid: r.bid,
            utility_sell: r.utility_sell,
            utility_buy: r.utility_buy,
            reactive: r.reactive,
            group: r.group,
            pv_kw: r.pv_kw,
            pv_actor: r.pv_actor != 0,
        });
    }
    Ok(Scenario::from_parts(grid, class_names, slots, pv_shape)?)
}

pub fn trades_text(solution: &ClearingSolution, peers: &[Peer]) -> String {
    let mut out = String::from("seller\tbuyer\tkwh\n");
    for (i, j, kwh) in solution.x.triples() {
        let _ = writeln!(out, "{}\t{}\t{kwh}", peers[i].id, peers[j].id);
    }
    out
}

pub fn peer_results_text(solution: &ClearingSolution, peers: &[Peer], revenue: &RevenueLedger) -> String {
    let mut out = String::from("id\tgroup\tu_buy\tu_sell\tcurtailment\tsold\tbought\trevenue\n");
    for (i, p) in peers.iter().enumerate() {
        let group = if p.pv_actor { "pv".to_owned() } else { p.group.to_string() };
        let _ = writeln!(
            out,
            "{}\t{group}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.id,
            solution.u_buy[i],
            solution.u_sell[i],
            solution.curtailment[i],
            solution.x.sold(i),
            solution.x.bought(i),
            revenue.per_peer[i]
        );
    }
    out
}

#[derive(Deserialize)]
struct TradeRow {
    seller: usize,
    buyer: usize,
    kwh: f64,
}

#[derive(Deserialize)]
struct PeerResultRow {
    id: usize,
    u_buy: f64,
    u_sell: f64,
    curtailment: f64,
}

/// Rebuilds a solution of the slot `peers` from its exported trade and peer
/// files. The objective is not stored and comes back as NaN.
pub fn read_solution(trades: &Path, results: &Path, peers: &[Peer]) -> AppResult<ClearingSolution> {
    let position: std::collections::HashMap<usize, usize> = peers.iter().enumerate().map(|(k, p)| (p.id, k)).collect();
    let lookup = |path: &Path, id: usize| {
        position
            .get(&id)
            .copied()
            .ok_or_else(|| AppError::format(path, format!("unknown peer id {id}")))
    };
    let n = peers.len();
    let mut x = TradeMatrix::zeros(n);
    for r in records::<TradeRow>(trades, &read_text(trades)?)? {
        x.set(lookup(trades, r.seller)?, lookup(trades, r.buyer)?, r.kwh);
    }
    let (mut u_buy, mut u_sell, mut curtailment) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let rows: Vec<PeerResultRow> = records(results, &read_text(results)?)?;
    if rows.len() != n {
        return Err(AppError::format(results, format!("expected {n} peers, got {}", rows.len())));
    }
    for r in rows {
        let k = lookup(results, r.id)?;
        u_buy[k] = r.u_buy;
        u_sell[k] = r.u_sell;
        curtailment[k] = r.curtailment;
    }
    Ok(ClearingSolution {
        x,
        u_buy,
        u_sell,
        curtailment,
        objective: f64::NAN,
        status: LpStatus::Optimal,
        iterations: 0,
    })
}

/// The iteration trace without wall times, which live in the timing table.
pub fn trace_text(trace: &[IterationRecord], class_names: &[String]) -> String {
    let mut out = String::from("iter\td1\td2\tobjective");
    for name in class_names {
        let _ = write!(out, "\tprofit_{name}");
    }
    out.push('\n');
    for r in trace {
        let _ = write!(out, "{}\t{}\t{}\t{}", r.iter, r.d1, r.d2, r.objective);
        for g in &r.group_profits {
            let _ = write!(out, "\t{g}");
        }
        out.push('\n');
    }
    out
}
