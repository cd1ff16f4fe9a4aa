//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 6 and 8 audit the fair runs produced by 5 and 7.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use p2pfair::config::{load_scenario, LoadedScenario};
use p2pfair::run::{carried_over, run_fair, run_reference, FairRun, ReferenceRun};
use p2pfair_core::clearing::{
    audit_fair, clear_reference, compute_revenue, AlternatingOptions, FairModelInputs, FairOutcome,
};
use p2pfair_core::fairness::{unfairness_sorted, wasserstein_lp, wasserstein_sorted_oracle};
use p2pfair_core::grid::{build_grid, Bus, GridModel};
use p2pfair_core::lp::{LpStatus, SolveOptions};
use p2pfair_core::market::{build_bid_match, BidMatch, GroupPartition, Peer};
use p2pfair_core::scenario::{generate, Scenario, HOURS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 0.01;
const EPS_GRID: [f64; 8] = [0.01, 0.02, 0.05, 0.10, 0.20, 0.50, 0.70, 1.00];
const PLANT_KW: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

type Verdict = Result<String, String>;

fn check(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn within_budget(start: Instant, seconds: f64) -> Result<f64, String> {
    let t = start.elapsed().as_secs_f64();
    check(t < seconds, || format!("took {t:.1} s, budget {seconds} s"))?;
    Ok(t)
}

fn scenario_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn alternating() -> AlternatingOptions {
    AlternatingOptions {
        tol: TOL,
        iter_cap: 15,
        lp: SolveOptions::default(),
    }
}

/// One slot's fair runs with the context needed to audit them.
struct Audited {
    label: String,
    scenario: Scenario,
    references: Vec<ReferenceRun>,
    runs: Vec<FairRun>,
    epsilons: Vec<f64>,
}

impl Audited {
    fn outcomes(&self) -> impl Iterator<Item = (usize, &ReferenceRun, f64, &FairOutcome)> + '_ {
        self.references.iter().zip(&self.runs).flat_map(move |(r, run)| {
            run.outcomes.iter().zip(&self.epsilons).map(move |(o, &eps)| {
                (r.hour, r, eps, o.as_ref().expect("failed runs are rejected when recorded"))
            })
        })
    }
}

fn exact_d(scenario: &Scenario, o: &FairOutcome) -> f64 {
    unfairness_sorted(&o.solution.x, &scenario.partition).unwrap()
}

fn fair_day(loaded: &LoadedScenario, label: &str, epsilons: &[f64]) -> Result<Audited, String> {
    let scenario = generate(&loaded.spec).map_err(|e| e.to_string())?;
    let hours: Vec<usize> = (0..HOURS).collect();
    let references = run_reference(&scenario, &hours, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let runs = run_fair(&scenario, &references, epsilons, &alternating(), None).map_err(|e| e.to_string())?;
    reject_failures(label, &runs)?;
    Ok(Audited {
        label: label.to_owned(),
        scenario,
        references,
        runs,
        epsilons: epsilons.to_vec(),
    })
}

fn reject_failures(label: &str, runs: &[FairRun]) -> Result<(), String> {
    for r in runs {
        for o in &r.outcomes {
            if let Err(e) = o {
                return Err(format!("{label} h{:02}: {e}", r.hour));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- 1

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let n = rng.gen_range(1..=12);
            (0..n).map(|_| rng.gen_range(0.0..=100.0)).collect()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let (lp, plan) = wasserstein_lp(&a, &b).map_err(|e| e.to_string())?;
        let oracle = wasserstein_sorted_oracle(&a, &b).map_err(|e| e.to_string())?;
        let gap = (lp - oracle).abs();
        worst = worst.max(gap);
        check(gap <= 1e-6, || format!("pair {case}: lp {lp} oracle {oracle}"))?;
        check(plan.marginals_hold(1e-9), || format!("pair {case}: plan marginals off"))?;
    }
    let t = within_budget(start, 10.0)?;
    Ok(format!("200 pairs, worst gap {worst:.1e}, {t:.2} s"))
}

// ---------------------------------------------------------------- 2

fn micro_peer(id: usize, quarters_c: u32, quarters_e: u32, rng: &mut ChaCha8Rng) -> Peer {
    let utility_buy = rng.gen_range(0.10..0.20);
    let ask = utility_buy + rng.gen_range(0.0..0.05);
    let utility_sell = utility_buy + rng.gen_range(0.0..0.05);
    Peer {
        id,
        bus: 1,
        consumption: f64::from(quarters_c) * 0.25,
        production: f64::from(quarters_e) * 0.25,
        ask,
        bid: utility_sell,
        utility_sell,
        utility_buy,
        reactive: 0.0,
        group: id,
        pv_kw: f64::from(rng.gen_range(0u32..=8)) * 0.25,
        pv_actor: false,
    }
}

/// Best seller margin over every quarter-kWh assignment to the admissible
/// pairs within surpluses, deficits and the big-M cap on each pair.
fn enumerate_best(peers: &[Peer], bid_match: &BidMatch) -> f64 {
    let pairs: Vec<(usize, usize)> = bid_match.pairs().collect();
    let quarters = |v: f64| (v * 4.0).round() as i64;
    let surplus: Vec<i64> = peers.iter().map(|p| quarters(p.production - p.consumption).max(0)).collect();
    let deficit: Vec<i64> = peers.iter().map(|p| quarters(p.consumption - p.production).max(0)).collect();
    let mut sold = vec![0i64; peers.len()];
    let mut bought = vec![0i64; peers.len()];
    let mut best = 0.0f64;

    struct Ctx<'a> {
        pairs: &'a [(usize, usize)],
        peers: &'a [Peer],
        cap: Vec<i64>,
        surplus: &'a [i64],
        deficit: &'a [i64],
    }
    fn go(k: usize, value: f64, c: &Ctx<'_>, sold: &mut [i64], bought: &mut [i64], best: &mut f64) {
        if k == c.pairs.len() {
            *best = best.max(value);
            return;
        }
        let (i, j) = c.pairs[k];
        let room = c.cap[i].min(c.surplus[i] - sold[i]).min(c.deficit[j] - bought[j]);
        let margin = 0.5 * (c.peers[i].ask + c.peers[j].bid) - c.peers[i].utility_buy;
        for q in 0..=room.max(0) {
            sold[i] += q;
            bought[j] += q;
            go(k + 1, value + margin * q as f64 * 0.25, c, sold, bought, best);
            sold[i] -= q;
            bought[j] -= q;
        }
    }
    let ctx = Ctx {
        pairs: &pairs,
        peers,
        cap: (0..peers.len()).map(|i| (bid_match.big_m(i) * 4.0).floor() as i64).collect(),
        surplus: &surplus,
        deficit: &deficit,
    };
    go(0, 0.0, &ctx, &mut sold, &mut bought, &mut best);
    best
}

fn wide_line() -> GridModel {
    let buses = [
        Bus { id: 0, parent: None, r: 0.0, x: 0.0 },
        Bus { id: 1, parent: Some(0), r: 1e-4, x: 1e-4 },
    ];
    build_grid(&buses, 1.0, 0.0, 4.0, 1000.0).unwrap()
}

fn micro_clearing() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = wide_line();
    let (mut traded, mut worst) = (0, 0.0f64);
    for case in 0..50 {
        let peers: Vec<Peer> = (0..3)
            .map(|k| {
                let (c, e) = (rng.gen_range(0..=12), rng.gen_range(0..=12));
                micro_peer(k, c, e, &mut rng)
            })
            .collect();
        let bid_match = build_bid_match(&peers);
        let partition = GroupPartition::from_peers(&peers, 3).map_err(|e| e.to_string())?;
        let sol = clear_reference(&peers, &bid_match, &grid, &partition, &SolveOptions::default())
            .map_err(|e| format!("case {case}: {e}"))?;
        check(sol.status == LpStatus::Optimal, || format!("case {case}: {:?}", sol.status))?;
        let best = enumerate_best(&peers, &bid_match);
        let gap = (sol.objective - best).abs();
        worst = worst.max(gap);
        check(gap <= 1e-6, || format!("case {case}: clearing {} enumeration {best}", sol.objective))?;
        for (i, j, kwh) in sol.x.triples() {
            check(peers[i].ask <= peers[j].bid, || format!("case {case}: trade {i}->{j} of {kwh} kWh below ask"))?;
        }
        traded += usize::from(sol.x.triples().next().is_some());
    }
    let t = within_budget(start, 30.0)?;
    Ok(format!("50 slots ({traded} with trades), worst gap {worst:.1e}, {t:.2} s"))
}

// ---------------------------------------------------------------- 3

/// Every parent array with `parent[k] < k`: each rooted tree shape on `n`
/// buses, in every labelling that keeps parents before children.
fn all_trees(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 1..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..k).map(move |parent| {
                    let mut q = p.clone();
                    q.push(parent);
                    q
                })
            })
            .collect();
    }
    out
}

/// Branch flows summed leaf to root, then squared voltages root to leaf:
/// `v_k = v_parent − 2 (r_k P_k + x_k Q_k)`.
fn recursive_voltages(parents: &[usize], r: &[f64], x: &[f64], p: &[f64], q: &[f64]) -> Vec<f64> {
    let n = parents.len() + 1;
    let (mut fp, mut fq) = (vec![0.0; n], vec![0.0; n]);
    for k in (1..n).rev() {
        fp[k] -= p[k];
        fq[k] -= q[k];
        let up = parents[k - 1];
        fp[up] += fp[k];
        fq[up] += fq[k];
    }
    let mut v = vec![1.0; n];
    for k in 1..n {
        v[k] = v[parents[k - 1]] - 2.0 * (r[k] * fp[k] + x[k] * fq[k]);
    }
    v
}

fn lindistflow() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut trees, mut worst) = (0, 0.0f64);
    for n in 2..=6 {
        for parents in all_trees(n) {
            trees += 1;
            for _ in 0..4 {
                // Shuffled ids so that ids carry no order.
                let mut ids: Vec<usize> = (0..n).map(|k| 10 * k + 3).collect();
                for k in (1..n).rev() {
                    ids.swap(k, rng.gen_range(0..=k));
                }
                let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.1)).collect();
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.1)).collect();
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let buses: Vec<Bus> = (0..n)
                    .map(|k| Bus {
                        id: ids[k],
                        parent: (k > 0).then(|| ids[parents[k - 1]]),
                        r: if k > 0 { r[k] } else { 0.0 },
                        x: if k > 0 { x[k] } else { 0.0 },
                    })
                    .collect();
                let grid = build_grid(&buses, 1.0, 0.5, 1.5, 1.0).map_err(|e| e.to_string())?;
                let (mut pp, mut qq) = (vec![0.0; n - 1], vec![0.0; n - 1]);
                for k in 1..n {
                    let pos = grid.position(ids[k]).ok_or("bus missing from the model")?;
                    pp[pos] = p[k];
                    qq[pos] = q[k];
                }
                let v = grid.voltage_profile(&pp, &qq).map_err(|e| e.to_string())?;
                let want = recursive_voltages(&parents, &r, &x, &p, &q);
                for k in 1..n {
                    let gap = (v[grid.position(ids[k]).unwrap()] - want[k]).abs();
                    worst = worst.max(gap);
                    check(gap <= 1e-10, || format!("tree {parents:?}: bus {k} off by {gap:e}"))?;
                }
            }
        }
    }
    Ok(format!("{trees} trees on 2..6 buses, 4 draws each, worst gap {worst:.1e}"))
}

// ---------------------------------------------------------------- 4

fn pair_name(a: usize, b: usize, names: &[String]) -> String {
    format!("({},{})", names[a], names[b])
}

fn desk_unfairness() -> Verdict {
    let start = Instant::now();
    let mut argmax: Vec<BTreeMap<usize, String>> = Vec::new();
    let mut totals = Vec::new();
    for day in ["high", "low"] {
        let loaded = load_scenario(&scenario_file(&format!("desk_{day}.toml"))).map_err(|e| e.to_string())?;
        let scenario = generate(&loaded.spec).map_err(|e| e.to_string())?;
        check(scenario.grid.num_buses() + 1 == 33 && scenario.num_peers() >= 132, || {
            format!("{day}: {} buses, {} peers", scenario.grid.num_buses() + 1, scenario.num_peers())
        })?;
        let active = scenario.active_hours();
        check(!active.is_empty() && active.windows(2).all(|w| w[1] == w[0] + 1), || {
            format!("{day}: active hours {active:?} are not one window")
        })?;
        check(active[0] >= 6 && *active.last().unwrap() <= 19 && active.contains(&12), || {
            format!("{day}: active hours {active:?} are not midday")
        })?;
        let runs = run_reference(&scenario, &active, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let names = &scenario.class_names;
        let mut by_hour = BTreeMap::new();
        let mut total = vec![0.0; 3];
        for r in &runs {
            check(r.report.d_max > 0.0, || format!("{day} h{:02}: D_max = 0", r.hour))?;
            let (a, b) = r.report.argmax.ok_or_else(|| format!("{day} h{:02}: no arg-max", r.hour))?;
            by_hour.insert(r.hour, pair_name(a, b, names));
            for (t, p) in total.iter_mut().zip(&r.report.distances) {
                *t += p.distance;
            }
        }
        argmax.push(by_hour);
        totals.push(total);
    }
    let (rp, rm) = ("(R,P)", "(R,M)");
    let high = &argmax[0];
    let plurality = |m: &BTreeMap<usize, String>| {
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for v in m.values() {
            *count.entry(v).or_default() += 1;
        }
        count.into_iter().max_by_key(|&(_, c)| c).map(|(k, _)| k.to_owned()).unwrap_or_default()
    };
    check(plurality(high) == rp, || format!("high-day plurality is {}", plurality(high)))?;
    let flipped: Vec<usize> = high
        .iter()
        .filter(|(h, v)| v.as_str() == rp && argmax[1].get(h).map(String::as_str) == Some(rm))
        .map(|(h, _)| *h)
        .collect();
    let reversed: Vec<usize> = high
        .iter()
        .filter(|(h, v)| v.as_str() == rm && argmax[1].get(h).map(String::as_str) == Some(rp))
        .map(|(h, _)| *h)
        .collect();
    check(!flipped.is_empty(), || "no slot flips from (R,P) to (R,M)".into())?;
    check(reversed.is_empty(), || format!("slots {reversed:?} flip from (R,M) to (R,P)"))?;
    let t = within_budget(start, 300.0)?;
    let fmt = |v: &Vec<f64>| v.iter().map(|d| format!("{d:.2}")).collect::<Vec<_>>().join("/");
    Ok(format!(
        "(R,P)->(R,M) at {flipped:?}; day totals RM/RP/MP high {} low {}; {t:.1} s",
        fmt(&totals[0]),
        fmt(&totals[1])
    ))
}

// ---------------------------------------------------------------- 5

fn epsilon_sweep(store: &mut Vec<Audited>) -> Verdict {
    let start = Instant::now();
    let mut plateaus = Vec::new();
    let mut reductions = Vec::new();
    for day in ["low", "high"] {
        let loaded = load_scenario(&scenario_file(&format!("desk_{day}.toml"))).map_err(|e| e.to_string())?;
        let audited = fair_day(&loaded, &format!("eps {day}"), &EPS_GRID)?;
        for (r, run) in audited.references.iter().zip(&audited.runs) {
            let series: Vec<f64> = run.outcomes.iter().map(|o| exact_d(&audited.scenario, o.as_ref().unwrap())).collect();
            let d_ref = r.report.d_max;
            for (k, d) in series.iter().enumerate() {
                check(*d <= d_ref + 1e-6, || format!("{day} h{:02}: D({}) = {d} above reference {d_ref}", r.hour, EPS_GRID[k]))?;
                if k > 0 {
                    check(*d <= series[k - 1] + TOL, || {
                        format!("{day} h{:02}: D rises from {} to {d} at ε = {}", r.hour, series[k - 1], EPS_GRID[k])
                    })?;
                }
            }
            if d_ref > 0.0 {
                reductions.push(1.0 - series[series.len() - 1] / d_ref);
                if p2pfair::report::plateau_index(&series, TOL).is_some() {
                    plateaus.push(format!("{day} h{:02}", r.hour));
                }
            }
        }
        store.push(audited);
    }
    check(!plateaus.is_empty(), || "no slot reaches a plateau".into())?;
    let t = within_budget(start, 1800.0)?;
    let max = reductions.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(format!(
        "both days, {} slots with a plateau, largest reduction {:.0}%, {t:.0} s",
        plateaus.len(),
        100.0 * max
    ))
}

// ---------------------------------------------------------------- 6

fn audit(store: &[Audited]) -> Verdict {
    check(!store.is_empty(), || "no fair runs to audit".into())?;
    let mut count = 0;
    for a in store {
        let sc = &a.scenario;
        for (hour, reference, epsilon, o) in a.outcomes() {
            let at = || format!("{} h{hour:02} ε={epsilon}", a.label);
            let peers = sc.peers(hour);
            let bid_match = sc.bid_match(hour);
            let inputs = FairModelInputs {
                peers,
                bid_match: &bid_match,
                grid: &sc.grid,
                partition: &sc.partition,
                reference: &reference.solution,
                epsilon,
            };
            let sol = &o.solution;
            let profits = compute_revenue(sol, peers, &sc.partition).per_group;
            for (g, (p, floor)) in profits.iter().zip(inputs.profit_floors()).enumerate() {
                check(*p >= floor - 1e-6, || format!("{}: group {g} profit {p} below {floor}", at()))?;
            }
            check(sol.total_u_sell() <= reference.solution.total_u_sell() + 1e-6, || format!("{}: utility sales", at()))?;
            check(sol.total_curtailment() <= reference.solution.total_curtailment() + 1e-6, || {
                format!("{}: curtailment", at())
            })?;
            let v = sol.voltages(peers, &sc.grid).map_err(|e| e.to_string())?;
            for (k, vk) in v.iter().enumerate() {
                check(*vk >= sc.grid.v_lo() - 1e-7 && *vk <= sc.grid.v_hi() + 1e-7, || {
                    format!("{}: bus position {k} at {vk}", at())
                })?;
            }
            let violations = audit_fair(&inputs, sol, 1e-6).map_err(|e| e.to_string())?;
            check(violations.is_empty(), || format!("{}: {violations:?}", at()))?;
            count += 1;
        }
    }
    Ok(format!("{count} runs pass every bound and the independent row check"))
}

// ---------------------------------------------------------------- 7

fn pv_sweep(store: &mut Vec<Audited>) -> Verdict {
    let start = Instant::now();
    let loaded = load_scenario(&scenario_file("desk_low.toml")).map_err(|e| e.to_string())?;
    let hours: Vec<usize> = (0..HOURS).collect();
    let mut totals = Vec::new();
    let mut previous: Option<Vec<FairRun>> = None;
    for &kw in &PLANT_KW {
        let scenario = generate(&loaded.with_plant(kw)).map_err(|e| e.to_string())?;
        let references = run_reference(&scenario, &hours, &SolveOptions::default()).map_err(|e| e.to_string())?;
        let warm = previous.as_deref().and_then(|p| carried_over(&scenario, p, 0));
        let runs = run_fair(&scenario, &references, &[1.0], &alternating(), warm.as_deref()).map_err(|e| e.to_string())?;
        let label = format!("pv {kw}");
        reject_failures(&label, &runs)?;
        let total: f64 = runs.iter().map(|r| exact_d(&scenario, r.outcomes[0].as_ref().unwrap())).sum();
        if let Some(&last) = totals.last() {
            check(total <= last + TOL, || format!("day total rises from {last} to {total} at {kw} kW"))?;
        }
        totals.push(total);
        // The next size starts from these trades.
        previous = Some(runs.iter().map(clone_run).collect());
        store.push(Audited {
            label,
            scenario,
            references,
            runs,
            epsilons: vec![1.0],
        });
    }
    let t = within_budget(start, 1800.0)?;
    let shown: Vec<String> = totals.iter().map(|d| format!("{d:.3}")).collect();
    Ok(format!(
        "scale s = {:.4}, day totals {} kWh, {t:.0} s",
        loaded.pv_scale,
        shown.join(" >= ")
    ))
}

fn clone_run(r: &FairRun) -> FairRun {
    FairRun {
        hour: r.hour,
        outcomes: r
            .outcomes
            .iter()
            .map(|o| Ok(o.as_ref().expect("failures rejected above").clone()))
            .collect(),
    }
}

// ---------------------------------------------------------------- 8

fn p2pfair(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_p2pfair")).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("p2pfair {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn algorithm_contract(store: &[Audited]) -> Verdict {
    check(!store.is_empty(), || "no fair runs to check".into())?;
    let (mut runs, mut converged) = (0, 0);
    for a in store {
        for (hour, _, epsilon, o) in a.outcomes() {
            let at = || format!("{} h{hour:02} ε={epsilon}", a.label);
            runs += 1;
            check(o.iterations >= 1 && o.iterations <= 15, || format!("{}: {} iterations", at(), o.iterations))?;
            check(o.trace.len() == o.iterations, || format!("{}: trace has {} records", at(), o.trace.len()))?;
            let last = o.trace.last().unwrap();
            let close = (last.d1 - last.d2).abs() <= TOL;
            check(o.converged == close, || format!("{}: converged = {} with |D1 - D2| = {}", at(), o.converged, (last.d1 - last.d2).abs()))?;
            check(o.converged || o.iterations == 15, || format!("{}: stopped early without converging", at()))?;
            let exact = exact_d(&a.scenario, o);
            check((o.d_max - exact).abs() <= TOL + 1e-6, || format!("{}: D_max {} against {exact}", at(), o.d_max))?;
            converged += usize::from(o.converged);
        }
    }

    // Exported traces carry every iteration of the library run.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let file = scenario_file("desk_low.toml");
    p2pfair(&["clear-fair", "--scenario", file.to_str().unwrap(), "--hours", "10..16", "--epsilon", "5", "--out", out])?;
    let loaded = load_scenario(&file).map_err(|e| e.to_string())?;
    let scenario = generate(&loaded.spec).map_err(|e| e.to_string())?;
    let hours: Vec<usize> = (10..=16).collect();
    let references = run_reference(&scenario, &hours, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let fair = run_fair(&scenario, &references, &[0.05], &alternating(), None).map_err(|e| e.to_string())?;
    reject_failures("trace", &fair)?;
    for run in &fair {
        let o = run.outcomes[0].as_ref().unwrap();
        let path = dir.path().join(format!("fair/eps_5/h{:02}_trace.tsv", run.hour));
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
            .collect();
        check(rows.len() == o.trace.len(), || format!("h{:02}: {} exported of {} iterations", run.hour, rows.len(), o.trace.len()))?;
        for (row, rec) in rows.iter().zip(&o.trace) {
            check(row[0] == rec.iter as f64 && row[1] == rec.d1 && row[2] == rec.d2, || {
                format!("h{:02}: exported iteration {} differs", run.hour, rec.iter)
            })?;
        }
    }
    Ok(format!("{runs} runs, {converged} converged, traces exported for 7 slots"))
}

// ---------------------------------------------------------------- 9

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let file = scenario_file("desk_low.toml");
    let s = file.to_str().unwrap();
    let commands: [&[&str]; 4] = [
        &["clear-ref", "--scenario", s],
        &["clear-fair", "--scenario", s, "--hours", "11..13", "--epsilon", "10"],
        &["sweep-epsilon", "--scenario", s, "--hours", "13", "--grid", "1,20,100"],
        &["sweep-pv", "--scenario", s, "--hours", "12..13", "--capacities", "0,10"],
    ];
    let mut compared = 0;
    for args in commands {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let mut full = args.to_vec();
            full.extend(["--out", d.path().to_str().unwrap()]);
            p2pfair(&full)?;
            p2pfair(&["report", "--out", d.path().to_str().unwrap()])?;
        }
        let files = files_under(dirs[0].path());
        check(files == files_under(dirs[1].path()), || format!("{}: different file sets", args[0]))?;
        for f in files.iter().filter(|f| f.file_name().unwrap() != "timing.tsv") {
            let a = fs::read(dirs[0].path().join(f)).unwrap();
            let b = fs::read(dirs[1].path().join(f)).unwrap();
            check(a == b, || format!("{}: {} differs", args[0], f.display()))?;
            compared += 1;
        }
    }
    Ok(format!("4 commands run twice, {compared} files identical (timing.tsv excluded)"))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let mut fair_runs: Vec<Audited> = Vec::new();
    let mut verdicts: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        verdicts.push((n, name, verdict));
    };
    run(1, "Wasserstein LP vs sorted oracle", &mut oracle_equivalence);
    run(2, "micro-scale clearing vs enumeration", &mut micro_clearing);
    run(3, "LinDistFlow vs recursive flows", &mut lindistflow);
    run(4, "desk-scale unfairness and arg-max flip", &mut desk_unfairness);
    run(5, "ε sweep monotone with a plateau", &mut || epsilon_sweep(&mut fair_runs));
    // 6 and 8 audit the runs of 5 and 7.
    run(7, "community PV monotone", &mut || pv_sweep(&mut fair_runs));
    run(6, "fairness constraint audit", &mut || audit(&fair_runs));
    run(8, "alternating algorithm contract", &mut || algorithm_contract(&fair_runs));
    run(9, "byte-identical reruns", &mut determinism);

    verdicts.sort_by_key(|v| v.0);
    let mut failed = 0;
    for (n, name, verdict) in &verdicts {
        match verdict {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
