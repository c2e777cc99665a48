//! Paired flow graph F and latent-capacity graph C.
//!
//! Flows are signed in the canonical `from -> to` orientation of each branch.
//! The directed latent capacities are derived from the flow on every update:
//! `c_fw = r - f` and `c_rev = r + f`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::model::{BranchId, BusId, ModelError};
use crate::topology::{BranchIx, BusIx, Direction, Topology};

/// Capacities closer than this to zero are treated as saturated.
pub const CAPACITY_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("branch {0} is already removed")]
    AlreadyRemoved(BranchId),
    #[error("branch {0} is removed")]
    Removed(BranchId),
    #[error("path is empty")]
    EmptyPath,
    #[error("path is not contiguous at step {0}")]
    BrokenPath(usize),
    #[error("push amount must be positive, got {0}")]
    NonPositiveAmount(f64),
    #[error("push of {amount} MW exceeds path bottleneck {bottleneck} MW")]
    ExceedsBottleneck { amount: f64, bottleneck: f64 },
    #[error("flow {flow} MW on {branch} exceeds rating {rating} MW")]
    OverRating { branch: BranchId, flow: f64, rating: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub branch: BranchIx,
    pub dir: Direction,
}

/// Sequence of branch traversals starting at `start`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub start: BusIx,
    pub steps: Vec<Step>,
}

impl Path {
    pub fn empty(start: BusIx) -> Self {
        Path {
            start,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn branches(&self) -> impl Iterator<Item = BranchIx> + '_ {
        self.steps.iter().map(|s| s.branch)
    }

    /// Bus sequence visited by the path, including the start.
    pub fn buses(&self, topo: &Topology) -> Vec<BusIx> {
        let mut out = vec![self.start];
        for s in &self.steps {
            out.push(topo.oriented_ends(s.branch, s.dir).1);
        }
        out
    }

    pub fn end(&self, topo: &Topology) -> BusIx {
        self.steps
            .last()
            .map(|s| topo.oriented_ends(s.branch, s.dir).1)
            .unwrap_or(self.start)
    }

    /// The same path walked backwards.
    pub fn reversed(&self, topo: &Topology) -> Path {
        let end = self.end(topo);
        let steps = self
            .steps
            .iter()
            .rev()
            .map(|s| Step {
                branch: s.branch,
                dir: match s.dir {
                    Direction::Forward => Direction::Reverse,
                    Direction::Reverse => Direction::Forward,
                },
            })
            .collect();
        Path { start: end, steps }
    }
}

#[inline]
fn clamp(c: f64) -> f64 {
    if c.abs() < CAPACITY_EPS {
        0.0
    } else {
        c
    }
}

/// Breadth-first search tree over unsaturated steps.
struct BfsTree {
    parent: Vec<Option<(BusIx, Step)>>,
    seen: Vec<bool>,
}

impl BfsTree {
    fn path_to(&self, target: BusIx) -> Path {
        let mut steps = Vec::new();
        let mut cur = target;
        while let Some((prev, step)) = self.parent[cur.index()] {
            steps.push(step);
            cur = prev;
        }
        steps.reverse();
        Path { start: cur, steps }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    topo: Arc<Topology>,
    flow: Vec<f64>,
    cap_fw: Vec<f64>,
    cap_rev: Vec<f64>,
    removed: Vec<bool>,
}

impl FlowState {
    /// Zero flow on every branch.
    pub fn new(topo: Arc<Topology>) -> Self {
        let m = topo.branch_count();
        let cap_fw: Vec<f64> = topo.branches().map(|b| topo.rating(b)).collect();
        FlowState {
            cap_rev: cap_fw.clone(),
            cap_fw,
            flow: vec![0.0; m],
            removed: vec![false; m],
            topo,
        }
    }

    /// State carrying the given flows; branches not listed carry zero.
    pub fn from_flows(topo: Arc<Topology>, flows: &BTreeMap<BranchId, f64>) -> Result<Self, FlowError> {
        let mut state = FlowState::new(topo);
        for (id, f) in flows {
            let b = state.topo.branch_ix(id)?;
            let r = state.topo.rating(b);
            if f.abs() > r + CAPACITY_EPS {
                return Err(FlowError::OverRating {
                    branch: id.clone(),
                    flow: *f,
                    rating: r,
                });
            }
            state.set_flow(b, *f);
        }
        Ok(state)
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn flow(&self, branch: BranchIx) -> f64 {
        self.flow[branch.index()]
    }

    pub fn flows(&self) -> &[f64] {
        &self.flow
    }

    pub fn latent(&self, branch: BranchIx, dir: Direction) -> f64 {
        match dir {
            Direction::Forward => self.cap_fw[branch.index()],
            Direction::Reverse => self.cap_rev[branch.index()],
        }
    }

    pub fn is_removed(&self, branch: BranchIx) -> bool {
        self.removed[branch.index()]
    }

    pub fn removed_mask(&self) -> &[bool] {
        &self.removed
    }

    pub fn live_branches(&self) -> impl Iterator<Item = BranchIx> + '_ {
        self.topo.branches().filter(|b| !self.removed[b.index()])
    }

    pub fn flow_by_id(&self, id: &BranchId) -> Result<f64, FlowError> {
        Ok(self.flow(self.topo.branch_ix(id)?))
    }

    /// Flow map keyed by branch id, live branches only.
    pub fn flow_map(&self) -> BTreeMap<BranchId, f64> {
        self.live_branches()
            .map(|b| (self.topo.branch_id(b).clone(), self.flow(b)))
            .collect()
    }

    pub(crate) fn set_flow(&mut self, branch: BranchIx, f: f64) {
        let i = branch.index();
        let r = self.topo.rating(branch);
        self.flow[i] = f;
        self.cap_fw[i] = clamp(r - f);
        self.cap_rev[i] = clamp(r + f);
    }

    /// Net flow leaving `bus` over live branches.
    pub fn net_outflow(&self, bus: BusIx) -> f64 {
        self.topo
            .neighbors(bus)
            .iter()
            .filter(|n| !self.removed[n.branch.index()])
            .map(|n| n.dir.sign() * self.flow[n.branch.index()])
            .sum()
    }

    /// Largest per-bus violation of `outflow = gen - load`.
    pub fn conservation_error(&self) -> f64 {
        self.topo
            .buses()
            .map(|b| (self.net_outflow(b) - self.topo.injection(b)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of `|f| <= r` over live branches (0 when none).
    pub fn rating_violation(&self) -> f64 {
        self.live_branches()
            .map(|b| (self.flow(b).abs() - self.topo.rating(b)).max(0.0))
            .fold(0.0, f64::max)
    }

    fn bfs(&self, starts: &[BusIx], stop: impl Fn(BusIx) -> bool) -> (BfsTree, Option<BusIx>) {
        let n = self.topo.bus_count();
        let mut tree = BfsTree {
            parent: vec![None; n],
            seen: vec![false; n],
        };
        let mut queue = VecDeque::new();
        for s in starts {
            if !tree.seen[s.index()] {
                tree.seen[s.index()] = true;
                queue.push_back(*s);
            }
        }
        for s in starts {
            if stop(*s) {
                return (tree, Some(*s));
            }
        }
        while let Some(u) = queue.pop_front() {
            for nb in self.topo.neighbors(u) {
                let b = nb.branch.index();
                if self.removed[b] || tree.seen[nb.bus.index()] {
                    continue;
                }
                if self.latent(nb.branch, nb.dir) <= 0.0 {
                    continue;
                }
                tree.seen[nb.bus.index()] = true;
                tree.parent[nb.bus.index()] = Some((
                    u,
                    Step {
                        branch: nb.branch,
                        dir: nb.dir,
                    },
                ));
                if stop(nb.bus) {
                    return (tree, Some(nb.bus));
                }
                queue.push_back(nb.bus);
            }
        }
        (tree, None)
    }

    /// Minimum-hop path over steps with positive latent capacity.
    pub fn shortest_path_ix(&self, from: BusIx, to: BusIx) -> Option<Path> {
        let (tree, hit) = self.bfs(&[from], |b| b == to);
        hit.map(|t| tree.path_to(t))
    }

    pub fn shortest_unsaturated_path(&self, from: BusId, to: BusId) -> Result<Option<Path>, FlowError> {
        let from = self.topo.bus_ix(from)?;
        let to = self.topo.bus_ix(to)?;
        Ok(self.shortest_path_ix(from, to))
    }

    /// Shortest path from any of `starts` to the first bus accepted by `target`.
    pub fn shortest_path_to_any(&self, starts: &[BusIx], target: impl Fn(BusIx) -> bool) -> Option<Path> {
        let (tree, hit) = self.bfs(starts, target);
        hit.map(|t| tree.path_to(t))
    }

    /// Buses reachable from `starts` without crossing a saturated step.
    pub fn reachable(&self, starts: &[BusIx]) -> Vec<bool> {
        self.bfs(starts, |_| false).0.seen
    }

    /// Buses that can reach `target` without crossing a saturated step.
    pub fn co_reachable(&self, target: BusIx) -> Vec<bool> {
        let n = self.topo.bus_count();
        let mut seen = vec![false; n];
        seen[target.index()] = true;
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            for nb in self.topo.neighbors(v) {
                if self.removed[nb.branch.index()] || seen[nb.bus.index()] {
                    continue;
                }
                // Step nb.bus -> v runs opposite to nb.dir.
                let back = match nb.dir {
                    Direction::Forward => Direction::Reverse,
                    Direction::Reverse => Direction::Forward,
                };
                if self.latent(nb.branch, back) <= 0.0 {
                    continue;
                }
                seen[nb.bus.index()] = true;
                queue.push_back(nb.bus);
            }
        }
        seen
    }

    fn check_path(&self, path: &Path) -> Result<(), FlowError> {
        if path.steps.is_empty() {
            return Err(FlowError::EmptyPath);
        }
        let mut at = path.start;
        for (i, s) in path.steps.iter().enumerate() {
            if self.removed[s.branch.index()] {
                return Err(FlowError::Removed(self.topo.branch_id(s.branch).clone()));
            }
            let (a, b) = self.topo.oriented_ends(s.branch, s.dir);
            if a != at {
                return Err(FlowError::BrokenPath(i));
            }
            at = b;
        }
        Ok(())
    }

    pub fn path_bottleneck(&self, path: &Path) -> Result<f64, FlowError> {
        self.check_path(path)?;
        Ok(path
            .steps
            .iter()
            .map(|s| self.latent(s.branch, s.dir))
            .fold(f64::INFINITY, f64::min))
    }

    /// Adds `amount` MW along the path and refreshes the latent capacities.
    pub fn push_along_path(&mut self, path: &Path, amount: f64) -> Result<(), FlowError> {
        if !(amount > 0.0) {
            return Err(FlowError::NonPositiveAmount(amount));
        }
        let bottleneck = self.path_bottleneck(path)?;
        if amount > bottleneck + CAPACITY_EPS {
            return Err(FlowError::ExceedsBottleneck { amount, bottleneck });
        }
        for s in &path.steps {
            let f = self.flow[s.branch.index()] + s.dir.sign() * amount;
            self.set_flow(s.branch, f);
        }
        Ok(())
    }

    /// Takes the branch out of both graphs. Its last flow value is kept.
    pub fn remove_ix(&mut self, branch: BranchIx) -> Result<(), FlowError> {
        if self.removed[branch.index()] {
            return Err(FlowError::AlreadyRemoved(self.topo.branch_id(branch).clone()));
        }
        self.removed[branch.index()] = true;
        Ok(())
    }

    pub fn remove_branch(&mut self, id: &BranchId) -> Result<(), FlowError> {
        let b = self.topo.branch_ix(id)?;
        self.remove_ix(b)
    }

    /// Signed transfer across `cut`, counted positive into the cluster
    /// marked by `toward`.
    pub fn transfer_into(&self, cut: &[BranchIx], toward: &[bool]) -> f64 {
        cut.iter()
            .map(|b| {
                let (f, t) = self.topo.ends(*b);
                let fl = self.flow(*b);
                match (toward[f.index()], toward[t.index()]) {
                    (false, true) => fl,
                    (true, false) => -fl,
                    _ => 0.0,
                }
            })
            .sum()
    }

    /// Live branch ids sorted.
    pub fn live_ids(&self) -> BTreeSet<BranchId> {
        self.live_branches().map(|b| self.topo.branch_id(b).clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, Bus, PowerNetwork};
    use proptest::prelude::*;

    fn diamond() -> Arc<Topology> {
        // 1 -> {2, 3} -> 4, with 1-3 at zero rating headroom once loaded.
        let net = PowerNetwork::from_parts(
            "d",
            100.0,
            (1..=4).map(|i| Bus::new(i, 0.0, 0.0)).collect(),
            vec![
                Branch::new("1-2", 1, 2, 100.0),
                Branch::new("2-4", 2, 4, 100.0),
                Branch::new("1-3", 1, 3, 100.0),
                Branch::new("3-4", 3, 4, 100.0),
            ],
        );
        Arc::new(Topology::new(&net))
    }

    fn ix(t: &Topology, id: &str) -> BranchIx {
        t.branch_ix(&BranchId::from(id)).unwrap()
    }

    #[test]
    fn same_bus_gives_empty_path() {
        let st = FlowState::new(diamond());
        let p = st.shortest_unsaturated_path(BusId(2), BusId(2)).unwrap().unwrap();
        assert!(p.is_empty());
        assert_eq!(st.path_bottleneck(&p), Err(FlowError::EmptyPath));
    }

    #[test]
    fn saturated_route_is_avoided() {
        let t = diamond();
        let mut st = FlowState::new(t.clone());
        st.set_flow(ix(&t, "1-2"), 100.0);
        let p = st.shortest_unsaturated_path(BusId(1), BusId(4)).unwrap().unwrap();
        let ids: Vec<_> = p.branches().map(|b| t.branch_id(b).as_str().to_owned()).collect();
        assert_eq!(ids, ["1-3", "3-4"]);
    }

    #[test]
    fn push_updates_latent_capacities() {
        let t = diamond();
        let mut st = FlowState::new(t.clone());
        let p = st
            .shortest_path_ix(t.bus_ix(BusId(1)).unwrap(), t.bus_ix(BusId(4)).unwrap())
            .unwrap();
        assert_eq!(st.path_bottleneck(&p).unwrap(), 100.0);
        st.push_along_path(&p, 25.0).unwrap();
        for b in p.branches() {
            assert_eq!(st.flow(b), 25.0);
            assert_eq!(st.latent(b, Direction::Forward), 75.0);
            assert_eq!(st.latent(b, Direction::Reverse), 125.0);
        }
        let back = p.reversed(&t);
        st.push_along_path(&back, 25.0).unwrap();
        for b in p.branches() {
            assert_eq!(st.flow(b), 0.0);
            assert_eq!(st.latent(b, Direction::Forward), 100.0);
        }
    }

    #[test]
    fn bottleneck_is_the_smallest_step() {
        let t = diamond();
        let mut st = FlowState::new(t.clone());
        st.set_flow(ix(&t, "1-2"), -20.0);
        st.set_flow(ix(&t, "2-4"), 100.0 - 35.86);
        let p = Path {
            start: t.bus_ix(BusId(1)).unwrap(),
            steps: vec![
                Step {
                    branch: ix(&t, "1-2"),
                    dir: Direction::Forward,
                },
                Step {
                    branch: ix(&t, "2-4"),
                    dir: Direction::Forward,
                },
            ],
        };
        assert!((st.path_bottleneck(&p).unwrap() - 35.86).abs() < 1e-12);
        assert!(matches!(
            st.push_along_path(&p, 40.0),
            Err(FlowError::ExceedsBottleneck { .. })
        ));
        assert_eq!(st.push_along_path(&p, 0.0), Err(FlowError::NonPositiveAmount(0.0)));
    }

    #[test]
    fn removal_hides_branch_and_is_single_shot() {
        let t = diamond();
        let mut st = FlowState::new(t.clone());
        st.remove_branch(&"1-2".into()).unwrap();
        assert!(matches!(
            st.remove_branch(&"1-2".into()),
            Err(FlowError::AlreadyRemoved(_))
        ));
        let p = st.shortest_unsaturated_path(BusId(1), BusId(2)).unwrap().unwrap();
        assert_eq!(p.len(), 3);
        st.remove_branch(&"2-4".into()).unwrap();
        assert!(st.shortest_unsaturated_path(BusId(1), BusId(2)).unwrap().is_none());
    }

    #[test]
    fn unknown_bus_is_an_error() {
        let st = FlowState::new(diamond());
        assert!(st.shortest_unsaturated_path(BusId(1), BusId(99)).is_err());
    }

    proptest! {
        #[test]
        fn pushes_keep_eq1_identity(amounts in prop::collection::vec(1u32..=400, 1..20)) {
            let t = diamond();
            let mut st = FlowState::new(t.clone());
            let one = t.bus_ix(BusId(1)).unwrap();
            let four = t.bus_ix(BusId(4)).unwrap();
            for (i, a) in amounts.iter().enumerate() {
                let (s, e) = if i % 3 == 2 { (four, one) } else { (one, four) };
                let Some(p) = st.shortest_path_ix(s, e) else { continue };
                let amt = (*a as f64 / 8.0).min(st.path_bottleneck(&p).unwrap());
                if amt <= 0.0 { continue; }
                st.push_along_path(&p, amt).unwrap();
                for b in t.branches() {
                    let r = t.rating(b);
                    let (fw, rev) = (st.latent(b, Direction::Forward), st.latent(b, Direction::Reverse));
                    prop_assert!(fw >= 0.0 && rev >= 0.0);
                    prop_assert!((fw + rev - 2.0 * r).abs() < 1e-9);
                    prop_assert!((fw - (r - st.flow(b))).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn push_then_reverse_restores(eighths in 1u32..=800) {
            // Dyadic amounts keep the round trip exact in binary floating point.
            let t = diamond();
            let mut st = FlowState::new(t.clone());
            let one = t.bus_ix(BusId(1)).unwrap();
            let four = t.bus_ix(BusId(4)).unwrap();
            let p0 = st.shortest_path_ix(one, four).unwrap();
            st.push_along_path(&p0, 12.5).unwrap();
            let before = st.clone();
            let p = st.shortest_path_ix(one, four).unwrap();
            let amt = (eighths as f64 / 8.0).min(st.path_bottleneck(&p).unwrap());
            st.push_along_path(&p, amt).unwrap();
            st.push_along_path(&p.reversed(&t), amt).unwrap();
            prop_assert_eq!(st, before);
        }
    }
}
