//! Incremental rerouting of a lost branch's flow.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::feasibility::MARGIN_EPS;
use crate::flowgraph::{FlowError, FlowState};
use crate::model::{BranchId, BusId};
use crate::topology::{BranchIx, Direction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub branch: BranchId,
    /// True when traversed against the branch's from-to orientation.
    pub reverse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReroutePath {
    pub buses: Vec<BusId>,
    pub steps: Vec<PathStep>,
    pub mw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Islanding {
    pub separated_buses: BTreeSet<BusId>,
    pub imbalance_mw: f64,
}

/// Equality ignores `elapsed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpdateResult {
    pub outaged: BranchId,
    pub outaged_flow_mw: f64,
    pub rerouted_mw: f64,
    pub paths: Vec<ReroutePath>,
    pub changed_branches: BTreeSet<BranchId>,
    pub deficit_mw: f64,
    /// Saturated cut left behind when the reroute falls short.
    pub saturated_cut: BTreeSet<BranchId>,
    pub islanding: Option<Islanding>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl PartialEq for UpdateResult {
    fn eq(&self, o: &Self) -> bool {
        self.outaged == o.outaged
            && self.outaged_flow_mw == o.outaged_flow_mw
            && self.rerouted_mw == o.rerouted_mw
            && self.paths == o.paths
            && self.changed_branches == o.changed_branches
            && self.deficit_mw == o.deficit_mw
            && self.saturated_cut == o.saturated_cut
            && self.islanding == o.islanding
    }
}

/// Removes `branch` and pushes its former flow from the exporting endpoint to
/// the importing one along successive shortest unsaturated paths.
pub fn apply_outage(state: &FlowState, branch: &BranchId) -> Result<(FlowState, UpdateResult), FlowError> {
    let started = Instant::now();
    let topo = state.topology().clone();
    let l = topo.branch_ix(branch)?;
    let mut next = state.clone();
    next.remove_ix(l)?;

    let f = state.flow(l);
    let (vf, vt) = topo.oriented_ends(l, Direction::of_flow(f));

    let component = topo.component_of(vf, next.removed_mask());
    let islanding = if component[vt.index()] {
        None
    } else {
        let other = topo.component_of(vt, next.removed_mask());
        let n_here = component.iter().filter(|x| **x).count();
        let n_there = other.iter().filter(|x| **x).count();
        let smaller = if n_there <= n_here { other } else { component };
        let imbalance = topo.mask_injection(&smaller);
        Some(Islanding {
            separated_buses: topo.bus_ids_of(&topo.buses_in(&smaller)).into_iter().collect(),
            imbalance_mw: if imbalance.abs() < MARGIN_EPS { 0.0 } else { imbalance },
        })
    };

    let mut remaining = f.abs();
    let mut paths = Vec::new();
    let mut changed: Vec<BranchIx> = Vec::new();
    while remaining > MARGIN_EPS {
        let Some(path) = next.shortest_path_ix(vf, vt) else {
            break;
        };
        let amount = remaining.min(next.path_bottleneck(&path)?);
        next.push_along_path(&path, amount)?;
        remaining -= amount;
        changed.extend(path.branches());
        paths.push(ReroutePath {
            buses: topo.bus_ids_of(&path.buses(&topo)),
            steps: path
                .steps
                .iter()
                .map(|s| PathStep {
                    branch: topo.branch_id(s.branch).clone(),
                    reverse: s.dir == Direction::Reverse,
                })
                .collect(),
            mw: amount,
        });
    }
    let deficit = if remaining > MARGIN_EPS { remaining } else { 0.0 };

    let saturated_cut = if deficit > 0.0 {
        let reach = next.reachable(&[vf]);
        let mut cut: BTreeSet<BranchId> = topo
            .branch_ids_of(&topo.boundary(&reach, next.removed_mask()))
            .into_iter()
            .collect();
        cut.insert(branch.clone());
        cut
    } else {
        BTreeSet::new()
    };

    let changed_branches = changed.into_iter().map(|b| topo.branch_id(b).clone()).collect();
    Ok((
        next,
        UpdateResult {
            outaged: branch.clone(),
            outaged_flow_mw: f,
            rerouted_mw: f.abs() - deficit,
            paths,
            changed_branches,
            deficit_mw: deficit,
            saturated_cut,
            islanding,
            elapsed: started.elapsed(),
        },
    ))
}
