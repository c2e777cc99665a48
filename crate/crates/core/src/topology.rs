//! Index-based graph view of the in-service part of a [`PowerNetwork`].
//!
//! Buses are numbered in ascending [`BusId`] order and branches in ascending
//! [`BranchId`] order, so every neighbor list sorted by index is also sorted
//! by `(BusId, BranchId)`. Breadth-first searches rely on that ordering for
//! deterministic tie-breaking.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::model::{BranchId, BusId, ModelError, PowerNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusIx(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchIx(pub u32);

impl BusIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl BranchIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for BranchIx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Traversal direction of a branch relative to its `from -> to` orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    pub fn of_flow(flow: f64) -> Self {
        if flow >= 0.0 {
            Direction::Forward
        } else {
            Direction::Reverse
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub bus: BusIx,
    pub branch: BranchIx,
    /// Direction of travel when leaving the owning bus along `branch`.
    pub dir: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    bus_ids: Vec<BusId>,
    bus_pos: HashMap<BusId, BusIx>,
    gen: Vec<f64>,
    load: Vec<f64>,
    branch_ids: Vec<BranchId>,
    branch_pos: HashMap<BranchId, BranchIx>,
    ends: Vec<(BusIx, BusIx)>,
    rating: Vec<f64>,
    adj: Vec<Vec<Neighbor>>,
}

impl Topology {
    /// Builds the graph over in-service branches. The network should have
    /// passed validation; dangling branches are skipped.
    pub fn new(network: &PowerNetwork) -> Self {
        let mut bus_ids: Vec<BusId> = network.buses().iter().map(|b| b.id).collect();
        bus_ids.sort();
        bus_ids.dedup();
        let bus_pos: HashMap<BusId, BusIx> = bus_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, BusIx(i as u32)))
            .collect();
        let mut gen = vec![0.0; bus_ids.len()];
        let mut load = vec![0.0; bus_ids.len()];
        for id in &bus_ids {
            let bus = network.bus(*id).expect("bus indexed");
            gen[bus_pos[id].index()] = bus.gen_mw;
            load[bus_pos[id].index()] = bus.load_mw;
        }

        let mut live: Vec<_> = network
            .branches()
            .iter()
            .filter(|b| b.in_service)
            .filter(|b| bus_pos.contains_key(&b.from_bus) && bus_pos.contains_key(&b.to_bus))
            .filter(|b| b.from_bus != b.to_bus)
            .collect();
        live.sort_by(|a, b| a.id.cmp(&b.id));
        live.dedup_by(|a, b| a.id == b.id);

        let mut branch_ids = Vec::with_capacity(live.len());
        let mut branch_pos = HashMap::with_capacity(live.len());
        let mut ends = Vec::with_capacity(live.len());
        let mut rating = Vec::with_capacity(live.len());
        let mut adj = vec![Vec::new(); bus_ids.len()];
        for (i, br) in live.iter().enumerate() {
            let ix = BranchIx(i as u32);
            let f = bus_pos[&br.from_bus];
            let t = bus_pos[&br.to_bus];
            branch_ids.push(br.id.clone());
            branch_pos.insert(br.id.clone(), ix);
            ends.push((f, t));
            rating.push(br.rating_mw);
            adj[f.index()].push(Neighbor {
                bus: t,
                branch: ix,
                dir: Direction::Forward,
            });
            adj[t.index()].push(Neighbor {
                bus: f,
                branch: ix,
                dir: Direction::Reverse,
            });
        }
        for list in &mut adj {
            list.sort_by_key(|n| (n.bus, n.branch));
        }
        Topology {
            bus_ids,
            bus_pos,
            gen,
            load,
            branch_ids,
            branch_pos,
            ends,
            rating,
            adj,
        }
    }

    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn branch_count(&self) -> usize {
        self.branch_ids.len()
    }

    pub fn buses(&self) -> impl Iterator<Item = BusIx> {
        (0..self.bus_ids.len() as u32).map(BusIx)
    }

    pub fn branches(&self) -> impl Iterator<Item = BranchIx> {
        (0..self.branch_ids.len() as u32).map(BranchIx)
    }

    pub fn bus_id(&self, bus: BusIx) -> BusId {
        self.bus_ids[bus.index()]
    }

    pub fn branch_id(&self, branch: BranchIx) -> &BranchId {
        &self.branch_ids[branch.index()]
    }

    pub fn bus_ix(&self, id: BusId) -> Result<BusIx, ModelError> {
        self.bus_pos.get(&id).copied().ok_or(ModelError::UnknownBus(id))
    }

    pub fn branch_ix(&self, id: &BranchId) -> Result<BranchIx, ModelError> {
        self.branch_pos
            .get(id)
            .copied()
            .ok_or_else(|| ModelError::UnknownBranch(id.clone()))
    }

    pub fn ends(&self, branch: BranchIx) -> (BusIx, BusIx) {
        self.ends[branch.index()]
    }

    /// Endpoints ordered along `dir`.
    pub fn oriented_ends(&self, branch: BranchIx, dir: Direction) -> (BusIx, BusIx) {
        let (f, t) = self.ends[branch.index()];
        match dir {
            Direction::Forward => (f, t),
            Direction::Reverse => (t, f),
        }
    }

    pub fn rating(&self, branch: BranchIx) -> f64 {
        self.rating[branch.index()]
    }

    pub fn gen(&self, bus: BusIx) -> f64 {
        self.gen[bus.index()]
    }

    pub fn load(&self, bus: BusIx) -> f64 {
        self.load[bus.index()]
    }

    pub fn injection(&self, bus: BusIx) -> f64 {
        self.gen[bus.index()] - self.load[bus.index()]
    }

    pub fn neighbors(&self, bus: BusIx) -> &[Neighbor] {
        &self.adj[bus.index()]
    }

    pub fn branch_ids_of(&self, branches: &[BranchIx]) -> Vec<BranchId> {
        branches.iter().map(|b| self.branch_id(*b).clone()).collect()
    }

    pub fn bus_ids_of(&self, buses: &[BusIx]) -> Vec<BusId> {
        buses.iter().map(|b| self.bus_id(*b)).collect()
    }

    /// Buses reachable from `start` over branches not flagged in `removed`.
    pub fn component_of(&self, start: BusIx, removed: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.bus_count()];
        seen[start.index()] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for n in self.neighbors(u) {
                if removed[n.branch.index()] || seen[n.bus.index()] {
                    continue;
                }
                seen[n.bus.index()] = true;
                queue.push_back(n.bus);
            }
        }
        seen
    }

    /// Live branches whose removal would disconnect their endpoints.
    pub fn bridges(&self, removed: &[bool]) -> Vec<bool> {
        let n = self.bus_count();
        let mut out = vec![false; self.branch_count()];
        let mut disc = vec![0usize; n];
        let mut low = vec![0usize; n];
        let mut clock = 0;
        for root in 0..n {
            if disc[root] != 0 {
                continue;
            }
            clock += 1;
            disc[root] = clock;
            low[root] = clock;
            // (bus, branch used to enter it, next neighbor position)
            let mut stack: Vec<(usize, Option<BranchIx>, usize)> = vec![(root, None, 0)];
            while let Some(top) = stack.last_mut() {
                let (u, via, pos) = *top;
                if let Some(nb) = self.adj[u].get(pos) {
                    top.2 += 1;
                    if removed[nb.branch.index()] || Some(nb.branch) == via {
                        continue;
                    }
                    let v = nb.bus.index();
                    if disc[v] == 0 {
                        clock += 1;
                        disc[v] = clock;
                        low[v] = clock;
                        stack.push((v, Some(nb.branch), 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let (Some(b), Some(parent)) = (via, stack.last()) {
                        let p = parent.0;
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            out[b.index()] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// Branches (not flagged in `removed`) with exactly one endpoint inside
    /// the bus mask, in ascending order.
    pub fn boundary(&self, inside: &[bool], removed: &[bool]) -> Vec<BranchIx> {
        self.branches()
            .filter(|b| !removed[b.index()])
            .filter(|b| {
                let (f, t) = self.ends(*b);
                inside[f.index()] != inside[t.index()]
            })
            .collect()
    }

    /// Net injection of the buses set in the mask.
    pub fn mask_injection(&self, inside: &[bool]) -> f64 {
        self.buses()
            .filter(|b| inside[b.index()])
            .map(|b| self.injection(b))
            .sum()
    }

    pub fn mask_of(&self, buses: &BTreeSet<BusId>) -> Result<Vec<bool>, ModelError> {
        let mut mask = vec![false; self.bus_count()];
        for id in buses {
            mask[self.bus_ix(*id)?.index()] = true;
        }
        Ok(mask)
    }

    pub fn buses_in(&self, mask: &[bool]) -> Vec<BusIx> {
        self.buses().filter(|b| mask[b.index()]).collect()
    }

    /// Same structure with injections taken from `network`, which must have
    /// the same buses.
    pub fn with_injections_from(&self, network: &PowerNetwork) -> Result<Self, ModelError> {
        let mut out = self.clone();
        for (i, id) in self.bus_ids.iter().enumerate() {
            let bus = network.bus(*id).ok_or(ModelError::UnknownBus(*id))?;
            out.gen[i] = bus.gen_mw;
            out.load[i] = bus.load_mw;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, Bus};

    #[test]
    fn neighbors_sorted_by_bus_then_branch() {
        let net = PowerNetwork::from_parts(
            "p",
            100.0,
            vec![Bus::new(5, 0.0, 0.0), Bus::new(1, 0.0, 0.0), Bus::new(3, 0.0, 0.0)],
            vec![
                Branch::new("b", 1, 5, 10.0),
                Branch::new("a", 1, 5, 10.0),
                Branch::new("c", 3, 1, 10.0),
                Branch::new("off", 3, 5, 10.0).out_of_service(),
            ],
        );
        let topo = Topology::new(&net);
        assert_eq!(topo.branch_count(), 3);
        let one = topo.bus_ix(BusId(1)).unwrap();
        let order: Vec<(BusId, &str)> = topo
            .neighbors(one)
            .iter()
            .map(|n| (topo.bus_id(n.bus), topo.branch_id(n.branch).as_str()))
            .collect();
        assert_eq!(order, vec![(BusId(3), "c"), (BusId(5), "a"), (BusId(5), "b")]);
        let c = topo.neighbors(one)[0];
        assert_eq!(c.dir, Direction::Reverse);
    }

    #[test]
    fn bridges_match_removal_check() {
        // triangle 1-2-3 with a spur 3-4 and a doubled 4-5
        let net = PowerNetwork::from_parts(
            "b",
            100.0,
            (1..=5).map(|i| Bus::new(i, 0.0, 0.0)).collect(),
            vec![
                Branch::new("1-2", 1, 2, 1.0),
                Branch::new("2-3", 2, 3, 1.0),
                Branch::new("3-1", 3, 1, 1.0),
                Branch::new("3-4", 3, 4, 1.0),
                Branch::new("4-5a", 4, 5, 1.0),
                Branch::new("4-5b", 4, 5, 1.0),
            ],
        );
        let topo = Topology::new(&net);
        let none = vec![false; topo.branch_count()];
        let got = topo.bridges(&none);
        for b in topo.branches() {
            let mut removed = none.clone();
            removed[b.index()] = true;
            let (f, t) = topo.ends(b);
            let split = !topo.component_of(f, &removed)[t.index()];
            assert_eq!(got[b.index()], split, "{}", topo.branch_id(b));
        }
        let mut removed = none.clone();
        removed[topo.branch_ix(&"4-5a".into()).unwrap().index()] = true;
        assert!(topo.bridges(&removed)[topo.branch_ix(&"4-5b".into()).unwrap().index()]);
    }
}
