#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use gridcuts_core::fixtures;
use gridcuts_core::synth;
use gridcuts_core::topology::Topology;
use gridcuts_core::{build_flow, BranchId, BusId, FlowState, Ordering, PowerNetwork};

pub const TOL: f64 = 1e-9;

pub fn id(s: &str) -> BranchId {
    BranchId::new(s)
}

pub fn ids(xs: &[&str]) -> BTreeSet<BranchId> {
    xs.iter().map(|s| id(s)).collect()
}

pub fn with_flows(network: &PowerNetwork, flows: &str) -> FlowState {
    let flows = fixtures::flows(flows).expect("bundled flows");
    FlowState::from_flows(Arc::new(Topology::new(network)), &flows).unwrap()
}

/// Named small cases with the flow states used for them.
pub fn small_corpus() -> Vec<(String, PowerNetwork, FlowState)> {
    let mut out = Vec::new();
    for name in [
        "fixture9",
        "table4",
        "table4_case2",
        "figure4",
        "figure8_s1",
        "figure8_s2",
    ] {
        let net = fixtures::case(name).unwrap();
        let st = build_flow(&net, Ordering::Deterministic).unwrap();
        out.push((name.to_owned(), net, st));
    }
    let f9 = fixtures::case("fixture9").unwrap();
    for flows in ["fixture9_case1", "fixture9_case2"] {
        out.push((flows.to_owned(), f9.clone(), with_flows(&f9, flows)));
    }
    let f4 = fixtures::case("figure4").unwrap();
    out.push(("figure4_flows".to_owned(), f4.clone(), with_flows(&f4, "figure4")));
    out
}

/// Random feasible network with `buses` buses and a handful of chords.
pub fn random_case(seed: u64, buses: usize) -> PowerNetwork {
    synth::random_feasible(seed, buses, buses / 2 + 1).1
}

/// Buses whose bit is set in `mask`, counting from the lowest id.
pub fn side(network: &PowerNetwork, mask: u64) -> BTreeSet<BusId> {
    let mut all: Vec<BusId> = network.buses().iter().map(|b| b.id).collect();
    all.sort();
    all.into_iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, b)| b)
        .collect()
}

pub fn complement(network: &PowerNetwork, s: &BTreeSet<BusId>) -> BTreeSet<BusId> {
    network
        .buses()
        .iter()
        .map(|b| b.id)
        .filter(|b| !s.contains(b))
        .collect()
}
