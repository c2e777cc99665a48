//! Independent reference computations: a DC power flow and exhaustive cut
//! enumeration. Neither shares code paths with the flow engine beyond the
//! data model.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowgraph::FlowState;
use crate::model::{BranchId, BusId, ModelError, PowerNetwork};
use crate::topology::Direction;

pub const DEFAULT_MAX_BUSES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("branch {0} has no reactance")]
    MissingReactance(BranchId),
    #[error("DC system is singular (network is disconnected)")]
    Singular,
    #[error("outage of {branch} islands buses {buses:?}")]
    Islanding { branch: BranchId, buses: Vec<BusId> },
    #[error("network has {buses} buses, enumeration limit is {limit}")]
    TooLarge { buses: usize, limit: usize },
    #[error("branch {0} is out of the flow graph")]
    Removed(BranchId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcSolution {
    pub slack: BusId,
    pub angles: BTreeMap<BusId, f64>,
    pub flows: BTreeMap<BranchId, f64>,
}

impl DcSolution {
    /// Largest nodal power mismatch in MW.
    pub fn kcl_error(&self, network: &PowerNetwork) -> f64 {
        let mut net: BTreeMap<BusId, f64> = network.buses().iter().map(|b| (b.id, b.net_injection())).collect();
        for br in network.branches().iter().filter(|b| b.in_service) {
            if let Some(f) = self.flows.get(&br.id) {
                *net.entry(br.from_bus).or_default() -= f;
                *net.entry(br.to_bus).or_default() += f;
            }
        }
        net.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Bus with the largest generation, lowest id on ties.
pub fn default_slack(network: &PowerNetwork) -> Option<BusId> {
    network
        .buses()
        .iter()
        .max_by(|a, b| a.gen_mw.total_cmp(&b.gen_mw).then(b.id.cmp(&a.id)))
        .map(|b| b.id)
}

/// Solves the linear DC model with the slack angle fixed at zero.
pub fn dc_solve(network: &PowerNetwork, slack: BusId) -> Result<DcSolution, OracleError> {
    network.bus(slack).ok_or(ModelError::UnknownBus(slack))?;
    let mut ids: Vec<BusId> = network.buses().iter().map(|b| b.id).collect();
    ids.sort();
    let pos: BTreeMap<BusId, usize> = ids
        .iter()
        .filter(|b| **b != slack)
        .enumerate()
        .map(|(i, b)| (*b, i))
        .collect();
    let n = pos.len();
    let live: Vec<_> = network.branches().iter().filter(|b| b.in_service).collect();

    let mut bmat = DMatrix::<f64>::zeros(n, n);
    for br in &live {
        let x = br
            .reactance_pu
            .ok_or_else(|| OracleError::MissingReactance(br.id.clone()))?;
        let y = 1.0 / x;
        let f = pos.get(&br.from_bus).copied();
        let t = pos.get(&br.to_bus).copied();
        if let Some(i) = f {
            bmat[(i, i)] += y;
        }
        if let Some(j) = t {
            bmat[(j, j)] += y;
        }
        if let (Some(i), Some(j)) = (f, t) {
            bmat[(i, j)] -= y;
            bmat[(j, i)] -= y;
        }
    }
    let base = network.base_mva();
    let mut p = DVector::<f64>::zeros(n);
    for bus in network.buses() {
        if let Some(i) = pos.get(&bus.id) {
            p[*i] = bus.net_injection() / base;
        }
    }
    let theta = if n == 0 {
        DVector::zeros(0)
    } else {
        let lu = bmat.lu();
        let sol = lu.solve(&p).ok_or(OracleError::Singular)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::Singular);
        }
        sol
    };
    let angle = |b: BusId| pos.get(&b).map(|i| theta[*i]).unwrap_or(0.0);
    let angles = ids.iter().map(|b| (*b, angle(*b))).collect();
    let flows = live
        .iter()
        .map(|br| {
            let x = br.reactance_pu.unwrap_or(f64::NAN);
            (br.id.clone(), base * (angle(br.from_bus) - angle(br.to_bus)) / x)
        })
        .collect();
    let sol = DcSolution { slack, angles, flows };
    if sol.kcl_error(network) > 1e-6 {
        return Err(OracleError::Singular);
    }
    Ok(sol)
}

/// Branches loaded beyond their rating after losing `outage`, with the
/// overload amount in MW.
pub fn dc_post_contingency_overloads(
    network: &PowerNetwork,
    slack: BusId,
    outage: &BranchId,
) -> Result<Vec<(BranchId, f64)>, OracleError> {
    let reduced = network.with_outage(outage)?;
    let comps = reduced.components();
    if comps.len() > network.components().len() {
        let smallest = comps.iter().min_by_key(|c| c.len()).cloned().unwrap_or_default();
        return Err(OracleError::Islanding {
            branch: outage.clone(),
            buses: smallest,
        });
    }
    let sol = dc_solve(&reduced, slack)?;
    Ok(reduced
        .branches()
        .iter()
        .filter(|b| b.in_service)
        .filter_map(|b| {
            let over = sol.flows[&b.id].abs() - b.rating_mw;
            (over > 1e-9).then(|| (b.id.clone(), over))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    /// Side holding the exporting endpoint of the branch.
    pub cluster1: BTreeSet<BusId>,
    pub cut: BTreeSet<BranchId>,
    /// Net export of `cluster1` computed from injections alone.
    pub required_mw: f64,
    /// Total rating of the cut without the tested branch.
    pub capacity_mw: f64,
    /// Both sides are internally connected.
    pub connected: bool,
}

impl CutRecord {
    pub fn margin(&self) -> f64 {
        self.capacity_mw - self.required_mw
    }

    pub fn saturated(&self) -> bool {
        self.capacity_mw < self.required_mw
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutEnumeration {
    pub branch: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub cuts: Vec<CutRecord>,
}

impl CutEnumeration {
    /// Smallest `capacity - required` over all bipartitions.
    pub fn min_margin(&self) -> f64 {
        self.cuts.iter().map(CutRecord::margin).fold(f64::INFINITY, f64::min)
    }

    pub fn find(&self, cluster1: &BTreeSet<BusId>) -> Option<&CutRecord> {
        self.cuts.iter().find(|c| &c.cluster1 == cluster1)
    }
}

/// Every bipartition of the live network that separates the endpoints of
/// `branch`, oriented by the branch's current flow.
pub fn enumerate_cuts(state: &FlowState, branch: &BranchId, max_buses: usize) -> Result<CutEnumeration, OracleError> {
    let topo = state.topology();
    let n = topo.bus_count();
    if n > max_buses {
        return Err(OracleError::TooLarge {
            buses: n,
            limit: max_buses,
        });
    }
    let l = topo.branch_ix(branch)?;
    if state.is_removed(l) {
        return Err(OracleError::Removed(branch.clone()));
    }
    let (vf, vt) = topo.oriented_ends(l, Direction::of_flow(state.flow(l)));
    let others: Vec<usize> = (0..n).filter(|i| *i != vf.index() && *i != vt.index()).collect();
    let live: Vec<_> = state.live_branches().collect();
    let inj: Vec<f64> = topo.buses().map(|b| topo.injection(b)).collect();

    let mut cuts = Vec::with_capacity(1 << others.len());
    for mask in 0u32..(1u32 << others.len()) {
        let mut inside = vec![false; n];
        inside[vf.index()] = true;
        for (k, i) in others.iter().enumerate() {
            if mask & (1 << k) != 0 {
                inside[*i] = true;
            }
        }
        let mut cut = BTreeSet::new();
        let mut capacity = 0.0;
        for b in &live {
            let (f, t) = topo.ends(*b);
            if inside[f.index()] != inside[t.index()] {
                cut.insert(topo.branch_id(*b).clone());
                if *b != l {
                    capacity += topo.rating(*b);
                }
            }
        }
        let required: f64 = (0..n).filter(|i| inside[*i]).map(|i| inj[i]).sum();
        let connected = side_connected(state, &inside, true) && side_connected(state, &inside, false);
        cuts.push(CutRecord {
            cluster1: (0..n)
                .filter(|i| inside[*i])
                .map(|i| topo.bus_id(crate::topology::BusIx(i as u32)))
                .collect(),
            cut,
            required_mw: required,
            capacity_mw: capacity,
            connected,
        });
    }
    Ok(CutEnumeration {
        branch: branch.clone(),
        from_bus: topo.bus_id(vf),
        to_bus: topo.bus_id(vt),
        cuts,
    })
}

fn side_connected(state: &FlowState, inside: &[bool], which: bool) -> bool {
    let topo = state.topology();
    let members: Vec<usize> = (0..inside.len()).filter(|i| inside[*i] == which).collect();
    let Some(&first) = members.first() else {
        return true;
    };
    let mut seen = vec![false; inside.len()];
    seen[first] = true;
    let mut stack = vec![first];
    while let Some(u) = stack.pop() {
        for nb in topo.neighbors(crate::topology::BusIx(u as u32)) {
            let v = nb.bus.index();
            if state.is_removed(nb.branch) || inside[v] != which || seen[v] {
                continue;
            }
            seen[v] = true;
            stack.push(v);
        }
    }
    members.iter().all(|i| seen[*i])
}

/// Brute-force supply check: all demand can be served iff no bus set exports
/// more than the rating of its boundary.
pub fn supply_feasible(network: &PowerNetwork, max_buses: usize) -> Result<bool, OracleError> {
    let buses = network.buses();
    if buses.len() > max_buses {
        return Err(OracleError::TooLarge {
            buses: buses.len(),
            limit: max_buses,
        });
    }
    let idx: BTreeMap<BusId, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let live: Vec<_> = network.branches().iter().filter(|b| b.in_service).collect();
    for mask in 1u32..(1u32 << buses.len()) {
        let inside = |b: BusId| mask & (1 << idx[&b]) != 0;
        let export: f64 = buses.iter().filter(|b| inside(b.id)).map(|b| b.net_injection()).sum();
        let rating: f64 = live
            .iter()
            .filter(|b| inside(b.from_bus) != inside(b.to_bus))
            .map(|b| b.rating_mw)
            .sum();
        if export > rating + 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, Bus};
    use crate::netflow::{build_flow, Ordering};

    #[test]
    fn two_bus_dc() {
        let net = PowerNetwork::from_parts(
            "two",
            100.0,
            vec![Bus::new(1, 100.0, 0.0), Bus::new(2, 0.0, 100.0)],
            vec![Branch::new("1-2", 1, 2, 200.0).with_reactance(0.1)],
        );
        let sol = dc_solve(&net, BusId(1)).unwrap();
        assert!((sol.flows[&BranchId::from("1-2")] - 100.0).abs() < 1e-9);
        assert_eq!(sol.angles[&BusId(1)], 0.0);
    }

    #[test]
    fn symmetric_split() {
        let net = PowerNetwork::from_parts(
            "sym",
            100.0,
            vec![
                Bus::new(1, 80.0, 0.0),
                Bus::new(2, 0.0, 0.0),
                Bus::new(3, 0.0, 0.0),
                Bus::new(4, 0.0, 80.0),
            ],
            vec![
                Branch::new("1-2", 1, 2, 100.0).with_reactance(0.2),
                Branch::new("2-4", 2, 4, 100.0).with_reactance(0.2),
                Branch::new("1-3", 1, 3, 100.0).with_reactance(0.2),
                Branch::new("3-4", 3, 4, 100.0).with_reactance(0.2),
            ],
        );
        let sol = dc_solve(&net, BusId(1)).unwrap();
        for id in ["1-2", "2-4", "1-3", "3-4"] {
            assert!((sol.flows[&BranchId::from(id)] - 40.0).abs() < 1e-9);
        }
        assert!(dc_post_contingency_overloads(&net, BusId(1), &"1-2".into())
            .unwrap()
            .is_empty());
        assert!(matches!(
            dc_post_contingency_overloads(&net.with_outage(&"1-3".into()).unwrap(), BusId(1), &"1-2".into()),
            Err(OracleError::Islanding { .. })
        ));
    }

    #[test]
    fn missing_reactance_is_reported() {
        let net = PowerNetwork::from_parts(
            "nx",
            100.0,
            vec![Bus::new(1, 1.0, 0.0), Bus::new(2, 0.0, 1.0)],
            vec![Branch::new("1-2", 1, 2, 10.0)],
        );
        assert_eq!(
            dc_solve(&net, BusId(1)),
            Err(OracleError::MissingReactance("1-2".into()))
        );
    }

    #[test]
    fn triangle_has_two_bipartitions() {
        let net = PowerNetwork::from_parts(
            "tri",
            100.0,
            vec![Bus::new(1, 30.0, 0.0), Bus::new(2, 0.0, 10.0), Bus::new(3, 0.0, 20.0)],
            vec![
                Branch::new("1-2", 1, 2, 15.0),
                Branch::new("2-3", 2, 3, 25.0),
                Branch::new("1-3", 1, 3, 35.0),
            ],
        );
        let st = build_flow(&net, Ordering::Deterministic).unwrap();
        let e = enumerate_cuts(&st, &"1-2".into(), DEFAULT_MAX_BUSES).unwrap();
        assert_eq!(e.cuts.len(), 2);
        let only1 = e.find(&BTreeSet::from([BusId(1)])).unwrap();
        assert_eq!(only1.required_mw, 30.0);
        assert_eq!(only1.capacity_mw, 35.0);
        let with3 = e.find(&BTreeSet::from([BusId(1), BusId(3)])).unwrap();
        assert_eq!(with3.required_mw, 10.0);
        assert_eq!(with3.capacity_mw, 25.0);
        assert!(supply_feasible(&net, 16).unwrap());
    }
}
