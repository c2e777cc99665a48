//! Construction of a feasible network flow from bus injections, and transfers
//! across cut-sets.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowgraph::{FlowError, FlowState};
use crate::model::{BranchId, BusId, ModelError, PowerNetwork};
use crate::topology::{BusIx, Topology};

/// Remaining supply or demand below this is considered exhausted.
pub const INJECTION_EPS: f64 = 1e-9;

/// How source/sink pairs are drawn while building a flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "seed", rename_all = "lowercase")]
pub enum Ordering {
    /// Lowest bus id with remaining supply, lowest with remaining demand.
    #[default]
    Deterministic,
    Seeded(u64),
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ordering::Deterministic => f.write_str("deterministic"),
            Ordering::Seeded(s) => write!(f, "seed {s}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetflowError {
    #[error("network cannot serve all demand: {deficit_mw} MW undelivered, limiting cut {limiting_cut:?}")]
    Infeasible {
        deficit_mw: f64,
        limiting_cut: Vec<BranchId>,
    },
    #[error("branch set {0:?} is not a cut of the live network")]
    NotACut(Vec<BranchId>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

enum Picker {
    Lowest,
    Random(Box<ChaCha8Rng>),
}

impl Picker {
    fn pick(&mut self, remaining: &[f64]) -> Option<BusIx> {
        let live = remaining
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > INJECTION_EPS)
            .map(|(i, _)| BusIx(i as u32));
        match self {
            Picker::Lowest => live.into_iter().next(),
            Picker::Random(rng) => {
                let all: Vec<BusIx> = live.collect();
                if all.is_empty() {
                    None
                } else {
                    Some(all[rng.random_range(0..all.len())])
                }
            }
        }
    }
}

/// Builds a flow that serves every load from the available generation by
/// repeatedly pushing along shortest unsaturated source-to-sink paths.
pub fn build_flow(network: &PowerNetwork, ordering: Ordering) -> Result<FlowState, NetflowError> {
    build_flow_on(Arc::new(Topology::new(network)), ordering)
}

pub fn build_flow_on(topo: Arc<Topology>, ordering: Ordering) -> Result<FlowState, NetflowError> {
    let mut state = FlowState::new(topo.clone());
    let mut supply: Vec<f64> = topo.buses().map(|b| topo.gen(b)).collect();
    let mut demand: Vec<f64> = topo.buses().map(|b| topo.load(b)).collect();

    // Buses with both generation and load serve themselves first.
    for b in topo.buses() {
        let i = b.index();
        let local = supply[i].min(demand[i]);
        supply[i] -= local;
        demand[i] -= local;
    }

    let mut picker = match ordering {
        Ordering::Deterministic => Picker::Lowest,
        Ordering::Seeded(seed) => Picker::Random(Box::new(ChaCha8Rng::seed_from_u64(seed))),
    };

    while let Some(sink) = picker.pick(&demand) {
        let Some(source) = picker.pick(&supply) else {
            break;
        };
        let path = match state.shortest_path_ix(source, sink) {
            Some(p) => p,
            None => {
                // The drawn pair is cut off; try every remaining source at once.
                let starts: Vec<BusIx> = topo.buses().filter(|b| supply[b.index()] > INJECTION_EPS).collect();
                match state.shortest_path_to_any(&starts, |b| demand[b.index()] > INJECTION_EPS) {
                    Some(p) => p,
                    None => return Err(infeasible(&state, &starts, &demand)),
                }
            }
        };
        let from = path.start.index();
        let to = path.end(&topo).index();
        let cap = if path.is_empty() {
            f64::INFINITY
        } else {
            state.path_bottleneck(&path)?
        };
        let amount = supply[from].min(demand[to]).min(cap);
        if !path.is_empty() && amount > 0.0 {
            state.push_along_path(&path, amount)?;
        }
        supply[from] -= amount;
        demand[to] -= amount;
        if supply[from] <= INJECTION_EPS {
            supply[from] = 0.0;
        }
        if demand[to] <= INJECTION_EPS {
            demand[to] = 0.0;
        }
    }
    Ok(state)
}

fn infeasible(state: &FlowState, starts: &[BusIx], demand: &[f64]) -> NetflowError {
    let topo = state.topology();
    let reach = state.reachable(starts);
    let cut = topo.boundary(&reach, state.removed_mask());
    NetflowError::Infeasible {
        deficit_mw: demand.iter().sum(),
        limiting_cut: topo.branch_ids_of(&cut),
    }
}

/// Signed flow across `cut` into `toward`. The branch set must equal the live
/// cut between `toward` and the rest of the network.
pub fn cut_transfer(
    state: &FlowState,
    cut: &BTreeSet<BranchId>,
    toward: &BTreeSet<BusId>,
) -> Result<f64, NetflowError> {
    let topo = state.topology();
    let mask = topo.mask_of(toward)?;
    let boundary = topo.boundary(&mask, state.removed_mask());
    let actual: BTreeSet<BranchId> = topo.branch_ids_of(&boundary).into_iter().collect();
    if &actual != cut {
        return Err(NetflowError::NotACut(cut.iter().cloned().collect()));
    }
    Ok(state.transfer_into(&boundary, &mask))
}
