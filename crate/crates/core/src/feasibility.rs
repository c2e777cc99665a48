//! Per-branch feasibility test: how much of a branch's flow can be rerouted
//! around it, and which cut-set limits the reroute.

use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowgraph::{FlowError, FlowState, Path, Step, CAPACITY_EPS};
use crate::model::{BranchId, BusId, ModelError};
use crate::topology::{BranchIx, BusIx, Direction};

/// Margins with magnitude below this are reported as exactly zero.
pub const MARGIN_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FtError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("branch {0} is out of the flow graph")]
    Removed(BranchId),
    #[error("augmentation for {0} did not converge within the iteration cap")]
    IterationCap(BranchId),
    #[error("cut and flow lists differ in length ({flows} vs {ratings})")]
    LengthMismatch { flows: usize, ratings: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtResult {
    pub branch: BranchId,
    /// Exporting endpoint: the reroute runs from here to `to_bus`.
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub flow_mw: f64,
    pub tc_mw: f64,
    pub margin_mw: f64,
    pub special: bool,
    pub kcrit: BTreeSet<BranchId>,
    pub cluster1: BTreeSet<BusId>,
    pub certificate: BTreeSet<BranchId>,
    pub radial: bool,
    /// Another cut attains the same margin.
    pub tie: bool,
    pub augmentations: usize,
}

fn snap(x: f64) -> f64 {
    if x.abs() < MARGIN_EPS {
        0.0
    } else {
        x
    }
}

/// Runs the test on a private copy of the capacity graph.
pub fn ft_edge(state: &FlowState, branch: &BranchId) -> Result<FtResult, FtError> {
    let l = state.topology().branch_ix(branch)?;
    ft_ix(state, l)
}

pub fn ft_ix(state: &FlowState, l: BranchIx) -> Result<FtResult, FtError> {
    let topo = state.topology();
    let id = topo.branch_id(l).clone();
    if state.is_removed(l) {
        return Err(FtError::Removed(id));
    }
    let f = state.flow(l);
    let (vf, vt) = topo.oriented_ends(l, Direction::of_flow(f));

    let mut c = state.clone();
    c.remove_ix(l)?;

    let cap = topo.branch_count().max(1) * topo.bus_count().max(1);
    let mut touched = vec![false; topo.branch_count()];
    let (pushed, augmentations, reach) =
        augment(&mut c, vf, vt, &mut touched, cap).ok_or_else(|| FtError::IterationCap(id.clone()))?;

    if augmentations == 0 {
        let component = topo.component_of(vf, c.removed_mask());
        if !component[vt.index()] {
            let margin = snap(-f.abs());
            return Ok(FtResult {
                branch: id.clone(),
                from_bus: topo.bus_id(vf),
                to_bus: topo.bus_id(vt),
                flow_mw: f,
                tc_mw: 0.0,
                margin_mw: margin,
                special: margin < 0.0,
                kcrit: BTreeSet::from([id.clone()]),
                cluster1: topo.bus_ids_of(&topo.buses_in(&component)).into_iter().collect(),
                certificate: BTreeSet::from([id]),
                radial: true,
                tie: false,
                augmentations: 0,
            });
        }
    }

    let cut = topo.boundary(&reach, c.removed_mask());
    // Capacity of the minimal cut measured on the original state. It equals
    // the pushed amount up to rounding and is independent of path order.
    let tc: f64 = cut
        .iter()
        .map(|b| {
            let (from, _) = topo.ends(*b);
            let dir = if reach[from.index()] {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            state.latent(*b, dir)
        })
        .sum();
    debug_assert!((tc - pushed).abs() <= 1e-6 * (1.0 + tc.abs()));
    let margin = snap(tc - f.abs());

    let co = c.co_reachable(vt);
    let tie = topo.buses().any(|b| !reach[b.index()] && !co[b.index()]);

    let mut kcrit: BTreeSet<BranchId> = topo.branch_ids_of(&cut).into_iter().collect();
    kcrit.insert(id.clone());
    let mut certificate = kcrit.clone();
    certificate.extend(
        topo.branches()
            .filter(|b| touched[b.index()])
            .map(|b| topo.branch_id(b).clone()),
    );

    Ok(FtResult {
        branch: id,
        from_bus: topo.bus_id(vf),
        to_bus: topo.bus_id(vt),
        flow_mw: f,
        tc_mw: if tc.abs() < CAPACITY_EPS { 0.0 } else { tc },
        margin_mw: margin,
        special: margin < 0.0,
        kcrit,
        cluster1: topo.bus_ids_of(&topo.buses_in(&reach)).into_iter().collect(),
        certificate,
        radial: false,
        tie,
        augmentations,
    })
}

const UNSEEN: u32 = u32::MAX;

/// Pushes flow from `vf` to `vt` along shortest unsaturated paths until none
/// is left. Paths of equal length are found together from one breadth-first
/// layering. Returns the amount pushed, the number of paths and the buses
/// still reachable from `vf`, or `None` past `cap` paths.
fn augment(
    c: &mut FlowState,
    vf: BusIx,
    vt: BusIx,
    touched: &mut [bool],
    cap: usize,
) -> Option<(f64, usize, Vec<bool>)> {
    let topo = c.topology().clone();
    let n = topo.bus_count();
    let mut level = vec![UNSEEN; n];
    let mut next = vec![0usize; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut pushed = 0.0;
    let mut paths = 0;
    loop {
        level.fill(UNSEEN);
        level[vf.index()] = 0;
        queue.clear();
        queue.push_back(vf);
        // Layers past the sink's cannot lie on a shortest path.
        while let Some(u) = queue.pop_front() {
            if level[u.index()] >= level[vt.index()] {
                break;
            }
            for nb in topo.neighbors(u) {
                if level[nb.bus.index()] == UNSEEN && !c.is_removed(nb.branch) && c.latent(nb.branch, nb.dir) > 0.0 {
                    level[nb.bus.index()] = level[u.index()] + 1;
                    queue.push_back(nb.bus);
                }
            }
        }
        let depth = level[vt.index()];
        if depth == UNSEEN {
            return Some((pushed, paths, level.iter().map(|l| *l != UNSEEN).collect()));
        }

        next.fill(0);
        let mut steps: Vec<Step> = Vec::new();
        let mut at = vf;
        loop {
            if at == vt {
                if paths >= cap {
                    return None;
                }
                let path = Path {
                    start: vf,
                    steps: steps.clone(),
                };
                let amount = c.path_bottleneck(&path).ok()?;
                c.push_along_path(&path, amount).ok()?;
                for s in &steps {
                    touched[s.branch.index()] = true;
                }
                pushed += amount;
                paths += 1;
                steps.clear();
                at = vf;
                continue;
            }
            let adj = topo.neighbors(at);
            let mut advanced = false;
            while next[at.index()] < adj.len() {
                let nb = adj[next[at.index()]];
                if level[nb.bus.index()] == level[at.index()] + 1
                    && (level[nb.bus.index()] < depth || nb.bus == vt)
                    && !c.is_removed(nb.branch)
                    && c.latent(nb.branch, nb.dir) > 0.0
                {
                    steps.push(Step {
                        branch: nb.branch,
                        dir: nb.dir,
                    });
                    at = nb.bus;
                    advanced = true;
                    break;
                }
                next[at.index()] += 1;
            }
            if advanced {
                continue;
            }
            // Dead end: drop the bus from this layering and back up.
            level[at.index()] = UNSEEN;
            match steps.pop() {
                Some(s) => {
                    let (prev, _) = topo.oriented_ends(s.branch, s.dir);
                    next[prev.index()] += 1;
                    at = prev;
                }
                None => break,
            }
        }
    }
}

#[derive(Debug, Default, PartialEq)]
pub struct Sweep {
    /// Results in ascending branch id order.
    pub results: Vec<FtResult>,
    pub errors: Vec<(BranchId, FtError)>,
}

/// Tests every listed live branch with nonzero flow. `None` means all live
/// branches. Tests run in parallel; output order is by branch id.
pub fn ft_sweep(state: &FlowState, branches: Option<&BTreeSet<BranchId>>) -> Sweep {
    let topo = state.topology();
    let mut errors = Vec::new();
    let targets: Vec<BranchIx> = match branches {
        None => state.live_branches().collect(),
        Some(ids) => {
            let mut v = Vec::with_capacity(ids.len());
            for id in ids {
                match topo.branch_ix(id) {
                    Ok(b) if !state.is_removed(b) => v.push(b),
                    Ok(_) => errors.push((id.clone(), FtError::Removed(id.clone()))),
                    Err(e) => errors.push((id.clone(), e.into())),
                }
            }
            v.sort();
            v
        }
    };
    let outcomes: Vec<(BranchIx, Result<FtResult, FtError>)> = targets
        .par_iter()
        .filter(|b| state.flow(**b).abs() > CAPACITY_EPS)
        .map(|b| (*b, ft_ix(state, *b)))
        .collect();
    let mut results = Vec::with_capacity(outcomes.len());
    for (b, out) in outcomes {
        match out {
            Ok(r) => results.push(r),
            Err(e) => errors.push((topo.branch_id(b).clone(), e)),
        }
    }
    errors.sort_by(|a, b| a.0.cmp(&b.0));
    Sweep { results, errors }
}

/// True when the transfer a cut must carry exceeds its total rating.
pub fn is_saturated(cut_flows: &[f64], cut_ratings: &[f64]) -> Result<bool, FtError> {
    if cut_flows.len() != cut_ratings.len() {
        return Err(FtError::LengthMismatch {
            flows: cut_flows.len(),
            ratings: cut_ratings.len(),
        });
    }
    let required: f64 = cut_flows.iter().sum();
    let capacity: f64 = cut_ratings.iter().sum();
    Ok(required.abs() > capacity)
}
