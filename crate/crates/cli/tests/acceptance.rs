//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use gridcuts_core::oracles::{dc_post_contingency_overloads, dc_solve, default_slack, enumerate_cuts};
use gridcuts_core::session::Options;
use gridcuts_core::topology::Topology;
use gridcuts_core::{
    apply_outage, build_flow, cut_transfer, fixtures, ft_edge, ft_sweep, synth, BranchId, BusId, FlowState, Ordering,
    PowerNetwork, Session, Status,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const TOL: f64 = 1e-9;

fn id(s: &str) -> BranchId {
    BranchId::new(s)
}

fn ids(xs: &[&str]) -> BTreeSet<BranchId> {
    xs.iter().map(|s| id(s)).collect()
}

fn side(net: &PowerNetwork, mask: u64) -> BTreeSet<BusId> {
    let mut all: Vec<BusId> = net.buses().iter().map(|b| b.id).collect();
    all.sort();
    all.into_iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, b)| b)
        .collect()
}

fn complement(net: &PowerNetwork, s: &BTreeSet<BusId>) -> BTreeSet<BusId> {
    net.buses().iter().map(|b| b.id).filter(|b| !s.contains(b)).collect()
}

fn random_case(seed: u64, buses: usize) -> PowerNetwork {
    synth::random_feasible(seed, buses, buses / 2 + 1).1
}

fn with_flows(net: &PowerNetwork, name: &str) -> FlowState {
    let flows = fixtures::flows(name).unwrap();
    FlowState::from_flows(Arc::new(Topology::new(net)), &flows).unwrap()
}

/// Every case with at most 12 buses, plus the shipped flow files.
fn small_states() -> Vec<(String, PowerNetwork, FlowState)> {
    let mut out = Vec::new();
    for name in fixtures::CASE_NAMES {
        let net = fixtures::case(name).unwrap();
        if net.buses().len() <= 12 {
            let st = build_flow(&net, Ordering::Deterministic).unwrap();
            out.push((name.to_string(), net, st));
        }
    }
    let f9 = fixtures::case("fixture9").unwrap();
    for flows in ["fixture9_case1", "fixture9_case2"] {
        out.push((flows.to_owned(), f9.clone(), with_flows(&f9, flows)));
    }
    let f4 = fixtures::case("figure4").unwrap();
    out.push(("figure4_flows".to_owned(), f4.clone(), with_flows(&f4, "figure4")));
    out
}

fn cut_invariance() -> Outcome {
    let start = Instant::now();
    let f9 = fixtures::case("fixture9").unwrap();
    let mut checked = 0usize;
    let mut check = |net: &PowerNetwork, masks: &[u64], seed: u64| -> Result<(), String> {
        let st = build_flow(net, Ordering::Seeded(seed)).unwrap();
        for &m in masks {
            let c1 = side(net, m);
            let cut = net.cut_between(&c1).unwrap();
            let moved = cut_transfer(&st, &cut, &complement(net, &c1)).unwrap();
            let dp1 = net.cluster_injection(&c1);
            ensure!(
                (moved - dp1).abs() <= TOL,
                "{} seed {seed} mask {m:b}: {moved} vs {dp1}",
                net.name()
            );
            checked += 1;
        }
        Ok(())
    };
    let all: Vec<u64> = (1..(1u64 << f9.buses().len()) - 1).collect();
    for seed in 0..100 {
        check(&f9, &all, seed)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..200u64 {
        let buses = rng.random_range(3..=30);
        let net = random_case(1000 + k, buses);
        let masks: Vec<u64> = (0..20).map(|_| rng.random_range(1..(1u64 << buses) - 1)).collect();
        for seed in 0..100 {
            check(&net, &masks, seed)?;
        }
    }
    let c1: BTreeSet<BusId> = [4, 5, 8, 9].map(BusId).into_iter().collect();
    let cut = ids(&["4-1", "9-2", "9-3"]);
    ensure!(f9.cut_between(&c1).unwrap() == cut, "reference cut differs");
    for seed in 0..100 {
        let st = build_flow(&f9, Ordering::Seeded(seed)).unwrap();
        let moved = cut_transfer(&st, &cut, &complement(&f9, &c1)).unwrap();
        ensure!((moved - 380.86).abs() <= TOL, "seed {seed}: {moved}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("{checked} cut checks, 380.86 MW reference cut, {secs:.1} s"))
}

fn agrees_with_enumeration(name: &str, st: &FlowState) -> Result<usize, String> {
    let sweep = ft_sweep(st, None);
    ensure!(sweep.errors.is_empty(), "{name}: {:?}", sweep.errors);
    for r in &sweep.results {
        let en = enumerate_cuts(st, &r.branch, 16).unwrap();
        let worst = en.min_margin();
        let saturated = en.cuts.iter().any(|c| c.saturated());
        ensure!(
            r.special == saturated,
            "{name} {}: ft {} enum {worst}",
            r.branch,
            r.margin_mw
        );
        ensure!(
            (r.margin_mw - worst).abs() <= TOL,
            "{name} {}: ft {} enum {worst}",
            r.branch,
            r.margin_mw
        );
    }
    Ok(sweep.results.len())
}

fn detection() -> Outcome {
    let start = Instant::now();
    let mut tested = 0;
    for (name, _, st) in small_states() {
        tested += agrees_with_enumeration(&name, &st)?;
    }
    for seed in 0..500u64 {
        let net = random_case(seed, 3 + (seed % 10) as usize);
        let st = build_flow(&net, Ordering::Seeded(seed)).unwrap();
        tested += agrees_with_enumeration(net.name(), &st)?;
    }
    let t4 = fixtures::case("table4").unwrap();
    let r = ft_edge(&build_flow(&t4, Ordering::Deterministic).unwrap(), &id("3-4")).unwrap();
    ensure!(
        (r.margin_mw + 31.0).abs() <= TOL,
        "table4 case 1 margin {}",
        r.margin_mw
    );
    let t4b = fixtures::case("table4_case2").unwrap();
    let r2 = ft_edge(&build_flow(&t4b, Ordering::Deterministic).unwrap(), &id("3-4")).unwrap();
    ensure!(
        r2.margin_mw >= 0.0 && !r2.special,
        "table4 case 2 margin {}",
        r2.margin_mw
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "{tested} branches match enumeration, 3-4 margin {} then {}, {secs:.1} s",
        r.margin_mw, r2.margin_mw
    ))
}

fn identity_gap(net: &PowerNetwork, st: &FlowState, r: &gridcuts_core::FtResult) -> f64 {
    let rated: f64 = r
        .kcrit
        .iter()
        .filter(|b| **b != r.branch)
        .map(|b| net.branch(b).unwrap().rating_mw)
        .sum();
    let moved = cut_transfer(st, &r.kcrit, &complement(net, &r.cluster1)).unwrap();
    r.margin_mw - (rated - moved)
}

fn margin_identity() -> Outcome {
    let mut states = small_states();
    for seed in 0..100u64 {
        let net = random_case(seed, 4 + (seed % 20) as usize);
        let st = build_flow(&net, Ordering::Deterministic).unwrap();
        states.push((net.name().to_owned(), net, st));
    }
    let net = fixtures::case("ieee118_study").unwrap();
    let st = build_flow(&net, Ordering::Deterministic).unwrap();
    states.push(("ieee118_study".to_owned(), net, st));
    let mut n = 0;
    for (name, net, st) in &states {
        for r in ft_sweep(st, None).results {
            let gap = identity_gap(net, st, &r);
            ensure!(gap.abs() <= 1e-6, "{name} {}: off by {gap}", r.branch);
            n += 1;
        }
    }
    let f9 = fixtures::case("fixture9").unwrap();
    let st = with_flows(&f9, "fixture9_case1");
    let r = ft_edge(&st, &id("4-1")).unwrap();
    let moved = cut_transfer(&st, &r.kcrit, &complement(&f9, &r.cluster1)).unwrap();
    ensure!(r.kcrit == ids(&["4-1", "6-7"]), "fixture9 kcrit {:?}", r.kcrit);
    ensure!(
        (moved - 335.86).abs() <= TOL && (r.margin_mw + 35.86).abs() <= TOL,
        "fixture9 {moved} {}",
        r.margin_mw
    );
    let t4 = fixtures::case("table4").unwrap();
    let st = build_flow(&t4, Ordering::Deterministic).unwrap();
    let r = ft_edge(&st, &id("3-4")).unwrap();
    let moved = cut_transfer(&st, &r.kcrit, &complement(&t4, &r.cluster1)).unwrap();
    ensure!(
        (moved - 231.0).abs() <= TOL && (r.margin_mw + 31.0).abs() <= TOL,
        "table4 {moved} {}",
        r.margin_mw
    );
    Ok(format!("{n} results; 300 - 335.86 = -35.86 and 200 - 231 = -31"))
}

fn ups() -> Outcome {
    let f4 = fixtures::case("figure4").unwrap();
    let st = with_flows(&f4, "figure4");
    let (_, up) = apply_outage(&st, &id("5-6")).unwrap();
    ensure!(up.deficit_mw == 0.0 && up.rerouted_mw == 25.0, "figure4 {:?}", up);
    ensure!(
        up.paths.len() == 1 && up.paths[0].buses == [5, 4, 1, 6].map(BusId),
        "figure4 paths {:?}",
        up.paths
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut done, mut case, mut cuts) = (0, 0u64, 0usize);
    while done < 100 {
        case += 1;
        let net = random_case(case, rng.random_range(4..=11));
        let st = build_flow(&net, Ordering::Seeded(case)).unwrap();
        let loaded: Vec<_> = net
            .branches()
            .iter()
            .filter(|b| st.flow_by_id(&b.id).unwrap() != 0.0)
            .collect();
        if loaded.is_empty() {
            continue;
        }
        let br = loaded[rng.random_range(0..loaded.len())].id.clone();
        let (after, up) = apply_outage(&st, &br).unwrap();
        if up.deficit_mw > 0.0 || up.islanding.is_some() {
            continue;
        }
        ensure!(after.conservation_error() <= TOL, "{} {br}: conservation", net.name());
        ensure!(after.rating_violation() <= TOL, "{} {br}: rating", net.name());
        let reduced = net.with_outage(&br).unwrap();
        let fresh = build_flow(&reduced, Ordering::Deterministic).unwrap();
        for m in 1..(1u64 << net.buses().len()) - 1 {
            let c1 = side(&reduced, m);
            let c2 = complement(&reduced, &c1);
            let cut = reduced.cut_between(&c1).unwrap();
            let x = cut_transfer(&after, &cut, &c2).unwrap();
            let y = cut_transfer(&fresh, &cut, &c2).unwrap();
            ensure!((x - y).abs() <= TOL, "{} {br} mask {m:b}: {x} vs {y}", net.name());
            cuts += 1;
        }
        done += 1;
    }
    Ok(format!("25 MW via 5-4-1-6; 100 outages, {cuts} cuts equal to rebuild"))
}

/// Special flags and margins of a session against a fresh full sweep.
fn same_as_full(tag: &str, s: &Session) -> Result<(), String> {
    let full = ft_sweep(s.state(), None);
    let got: Vec<_> = s
        .results()
        .values()
        .map(|r| (&r.branch, r.special, r.margin_mw))
        .collect();
    let want: Vec<_> = full
        .results
        .iter()
        .map(|r| (&r.branch, r.special, r.margin_mw))
        .collect();
    ensure!(got == want, "{tag}: shortlisted results differ from a full sweep");
    Ok(())
}

fn sa_soundness() -> Outcome {
    let start = Instant::now();
    let spec = fixtures::scenario("ieee118_hurricane").unwrap();
    let short = Session::run_scenario(&spec, None, None, Options::default()).unwrap();
    let full = Session::run_scenario(&spec, None, None, Options { shortlist: false }).unwrap();
    same_as_full("ieee118", &short)?;
    for (a, b) in short.log().iter().zip(full.log()) {
        ensure!(a.new_specials == b.new_specials, "ieee118 event {}", a.index);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut events = 0;
    for k in 0..50u64 {
        let buses = rng.random_range(8..=40);
        let extra = rng.random_range(buses / 2..=buses);
        let net = synth::random_feasible(700 + k, buses, extra).1;
        let mut s = Session::start(net, Ordering::Deterministic).unwrap();
        for _ in 0..5 {
            let live: Vec<_> = s.results().keys().cloned().collect();
            if s.status() != Status::Nominal || live.is_empty() {
                break;
            }
            let mut br = live[rng.random_range(0..live.len())].clone();
            for _ in 0..20 {
                if s.what_if(&br).unwrap().status == Status::Nominal {
                    break;
                }
                br = live[rng.random_range(0..live.len())].clone();
            }
            s.apply_event(&br).unwrap();
            same_as_full(&format!("case {k} after {br}"), &s)?;
            events += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s");
    Ok(format!(
        "118-bus scenario and {events} random outages match full sweeps, {secs:.1} s"
    ))
}

fn documented_miss() -> Outcome {
    let overloads =
        |net: &PowerNetwork| dc_post_contingency_overloads(net, default_slack(net).unwrap(), &id("1-2")).unwrap();
    let s2 = fixtures::case("figure8_s2").unwrap();
    let ft = ft_edge(&build_flow(&s2, Ordering::Deterministic).unwrap(), &id("1-2")).unwrap();
    ensure!(!ft.special, "scenario 2: FT flags 1-2 with margin {}", ft.margin_mw);
    let over = overloads(&s2);
    ensure!(!over.is_empty(), "scenario 2: DC reports no overload");
    ensure!(
        over.iter().all(|(b, _)| ["1-3", "3-4", "4-2"].contains(&b.as_str())),
        "scenario 2: overloads off the low-impedance path {over:?}"
    );
    let s1 = fixtures::case("figure8_s1").unwrap();
    let ft1 = ft_edge(&build_flow(&s1, Ordering::Deterministic).unwrap(), &id("1-2")).unwrap();
    ensure!(
        ft1.special && !overloads(&s1).is_empty(),
        "scenario 1 not flagged by both"
    );
    Ok(format!(
        "scenario 2 FT margin {}, DC overloads {}; scenario 1 both flag",
        ft.margin_mw,
        over.len()
    ))
}

fn pair(id: &str) -> (u32, u32) {
    let (a, b) = id.split_once('-').unwrap();
    let (a, b): (u32, u32) = (a.parse().unwrap(), b.parse().unwrap());
    (a.min(b), a.max(b))
}

fn event_study() -> Outcome {
    let want: [&[(&str, &[&str], f64)]; 6] = [
        &[("26-30", &["26-30", "25-27", "25-23"], -77.0)],
        &[],
        &[],
        &[("42-49", &["42-49", "44-45"], -186.0)],
        &[],
        &[
            ("59-56", &["59-56", "59-54", "59-55", "69-49"], -64.0),
            ("63-59", &["63-59", "61-59", "60-59", "69-49"], -191.0),
            ("63-64", &["63-64", "61-59", "60-59", "69-49"], -191.0),
            ("64-65", &["64-65", "66-62", "66-67", "69-49"], -219.0),
        ],
    ];
    let spec = fixtures::scenario("ieee118_hurricane").unwrap();
    let s = Session::run_scenario(&spec, None, None, Options::default()).unwrap();
    let mut rows: Vec<Vec<_>> = vec![s.base().specials().cloned().collect()];
    rows.extend(s.log().iter().map(|r| r.new_specials.clone()));
    ensure!(rows.len() == want.len(), "{} rows", rows.len());
    let mut margins = Vec::new();
    for (k, (got, want)) in rows.iter().zip(want).enumerate() {
        ensure!(got.len() == want.len(), "event {k}: {} new specials", got.len());
        for (branch, kcrit, margin) in want {
            let Some(hit) = got.iter().find(|r| pair(r.branch.as_str()) == pair(branch)) else {
                return Err(format!("event {k}: {branch} missing"));
            };
            let got_k: BTreeSet<_> = hit.kcrit.iter().map(|b| pair(b.as_str())).collect();
            let want_k: BTreeSet<_> = kcrit.iter().map(|b| pair(b)).collect();
            ensure!(got_k == want_k, "event {k} {branch}: kcrit {:?}", hit.kcrit);
            ensure!(
                (hit.margin_mw - margin).abs() <= 1.0,
                "event {k} {branch}: margin {}",
                hit.margin_mw
            );
            margins.push(format!("{:.0}", hit.margin_mw));
        }
    }
    Ok(format!("margins {}", margins.join(", ")))
}

/// Full-sweep time and mean shortlisted re-analysis against a full sweep of
/// the same post-outage state, over `outages` evenly spaced branches.
struct Shape {
    sweep_s: f64,
    max_fraction: f64,
    speedup: f64,
}

fn shape(net: &PowerNetwork, outages: usize) -> Shape {
    let s = Session::start(net.clone(), Ordering::Deterministic).unwrap();
    let t = Instant::now();
    let _ = ft_sweep(s.state(), None);
    let sweep_s = t.elapsed().as_secs_f64();
    let candidates: Vec<BranchId> = s
        .results()
        .values()
        .filter(|r| !r.special && !r.radial)
        .map(|r| r.branch.clone())
        .collect();
    let step = (candidates.len() / outages).max(1);
    let (mut short, mut full, mut max_fraction) = (0.0, 0.0, 0.0f64);
    for br in candidates.iter().step_by(step).take(outages) {
        let t = Instant::now();
        let rec = s.what_if(br).unwrap();
        short += t.elapsed().as_secs_f64();
        let (post, _) = apply_outage(s.state(), br).unwrap();
        let t = Instant::now();
        let _ = ft_sweep(&post, None);
        full += t.elapsed().as_secs_f64();
        max_fraction = max_fraction.max(rec.retested.len() as f64 / net.branches().len() as f64);
    }
    Shape {
        sweep_s,
        max_fraction,
        speedup: full / short,
    }
}

fn performance() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let grid = synth::grid(7, 2000, 3000);
        ensure!(
            grid.buses().len() == 2000 && grid.branches().len() == 3000,
            "synthetic case has wrong size"
        );
        let slack = default_slack(&grid).unwrap();
        let t = Instant::now();
        for _ in 0..3 {
            dc_solve(&grid, slack).unwrap();
        }
        let dc_3000 = t.elapsed().as_secs_f64() / 3.0 * 3000.0;
        let g = shape(&grid, 20);
        let ring = shape(&synth::mesh(7, 2000, 3000), 10);
        let detail = format!(
            "sweep {:.2} s vs 3000 DC solves ~{:.0} s; shortlist max {:.1}% of branches, {:.1}x faster \
             [ring strip: max {:.1}%, {:.1}x]",
            g.sweep_s,
            dc_3000,
            100.0 * g.max_fraction,
            g.speedup,
            100.0 * ring.max_fraction,
            ring.speedup
        );
        ensure!(g.sweep_s <= dc_3000, "(a) fails: {detail}");
        ensure!(g.max_fraction < 0.10, "(b) shortlist too large: {detail}");
        ensure!(g.speedup >= 5.0, "(b) speedup too small: {detail}");
        Ok(detail)
    })
}

fn determinism() -> Outcome {
    let runs: &[&[&str]] = &[
        &["validate", "ieee118"],
        &["flow", "fixture9", "--seed", "3", "--cut", "4-1,9-2,9-3"],
        &["flow", "ieee118_study", "--seed", "5"],
        &["ft", "ieee118_study", "--all", "--report", "json", "--seed", "3"],
        &["ft", "ieee118_study", "--all", "--oracle", "--seed", "2"],
        &["ft", "table4", "--all", "--oracle"],
        &["scenario", "ieee118_hurricane", "--report", "json"],
        &[
            "scenario",
            "ieee118_hurricane",
            "--report",
            "csv",
            "--seed",
            "8",
            "--no-shortlist",
        ],
        &["scenario", "fixture9_remedial"],
    ];
    for args in runs {
        let go = || {
            Command::new(env!("CARGO_BIN_EXE_gridcuts"))
                .args(*args)
                .env_remove("GRIDCUTS_SEED")
                .output()
                .unwrap()
        };
        let (a, b) = (go(), go());
        ensure!(!a.stdout.is_empty(), "{args:?}: empty output");
        ensure!(a.status == b.status && a.stdout == b.stdout, "{args:?}: outputs differ");
    }
    Ok(format!("{} commands byte-identical across runs", runs.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("cut-transfer invariance", cut_invariance),
        ("detection guarantee", detection),
        ("margin identity", margin_identity),
        ("UPS correctness", ups),
        ("SA soundness", sa_soundness),
        ("documented miss", documented_miss),
        ("118-bus event study", event_study),
        ("performance shape", performance),
        ("determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
