//! Immutable data model of a power network: buses with active-power
//! injections and rated branches forming an undirected multigraph.
//!
//! All quantities are active power in MW (unity power factor). Branches that
//! are out of service stay in the model but never enter any graph view.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute generation/demand mismatch tolerated by [`PowerNetwork::validate`].
pub const BALANCE_TOLERANCE_MW: f64 = 1e-6;

/// Default system base used when a case does not specify one.
pub const DEFAULT_BASE_MVA: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Branch identifier. String valued so parallel circuits can coexist
/// (`"42-49"`, `"42-49#2"`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub String);

impl BranchId {
    pub fn new(id: impl Into<String>) -> Self {
        BranchId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BranchId {
    fn from(s: &str) -> Self {
        BranchId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub gen_mw: f64,
    pub load_mw: f64,
}

impl Bus {
    pub fn new(id: u32, gen_mw: f64, load_mw: f64) -> Self {
        Bus {
            id: BusId(id),
            gen_mw,
            load_mw,
        }
    }

    pub fn net_injection(&self) -> f64 {
        self.gen_mw - self.load_mw
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub rating_mw: f64,
    pub reactance_pu: Option<f64>,
    pub in_service: bool,
}

impl Branch {
    pub fn new(id: impl Into<String>, from: u32, to: u32, rating_mw: f64) -> Self {
        Branch {
            id: BranchId(id.into()),
            from_bus: BusId(from),
            to_bus: BusId(to),
            rating_mw,
            reactance_pu: None,
            in_service: true,
        }
    }

    pub fn with_reactance(mut self, x_pu: f64) -> Self {
        self.reactance_pu = Some(x_pu);
        self
    }

    pub fn out_of_service(mut self) -> Self {
        self.in_service = false;
        self
    }

    pub fn touches(&self, bus: BusId) -> bool {
        self.from_bus == bus || self.to_bus == bus
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("cluster must be a nonempty proper subset of the buses")]
    InvalidCluster,
    #[error("network failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("slack bus {bus} would need negative generation ({gen_mw} MW)")]
    NegativeSlack { bus: BusId, gen_mw: f64 },
    #[error("invalid scale factor {0}")]
    InvalidScale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    Imbalance {
        gen_mw: f64,
        load_mw: f64,
        mismatch_mw: f64,
    },
    DuplicateBus {
        bus: BusId,
    },
    DuplicateBranch {
        branch: BranchId,
    },
    DanglingEndpoint {
        branch: BranchId,
        bus: BusId,
    },
    SelfLoop {
        branch: BranchId,
    },
    NonPositiveRating {
        branch: BranchId,
        rating_mw: f64,
    },
    NonPositiveReactance {
        branch: BranchId,
    },
    NegativeInjection {
        bus: BusId,
    },
    Disconnected {
        components: usize,
        example: Vec<BusId>,
    },
    MissingReactance {
        branch: BranchId,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: ")?;
        match &self.kind {
            IssueKind::Imbalance {
                gen_mw,
                load_mw,
                mismatch_mw,
            } => write!(
                f,
                "generation {gen_mw} MW and load {load_mw} MW differ by {mismatch_mw} MW"
            ),
            IssueKind::DuplicateBus { bus } => write!(f, "duplicate bus id {bus}"),
            IssueKind::DuplicateBranch { branch } => write!(f, "duplicate branch id {branch}"),
            IssueKind::DanglingEndpoint { branch, bus } => {
                write!(f, "branch {branch} references absent bus {bus}")
            }
            IssueKind::SelfLoop { branch } => write!(f, "branch {branch} connects a bus to itself"),
            IssueKind::NonPositiveRating { branch, rating_mw } => {
                write!(f, "branch {branch} has non-positive rating {rating_mw} MW")
            }
            IssueKind::NonPositiveReactance { branch } => {
                write!(f, "branch {branch} has non-positive reactance")
            }
            IssueKind::NegativeInjection { bus } => {
                write!(f, "bus {bus} has negative generation or load")
            }
            IssueKind::Disconnected { components, example } => {
                let ex: Vec<String> = example.iter().map(|b| b.to_string()).collect();
                write!(
                    f,
                    "network has {components} components over in-service branches (e.g. buses {{{}}})",
                    ex.join(", ")
                )
            }
            IssueKind::MissingReactance { branch } => {
                write!(f, "branch {branch} has no reactance (DC oracle unavailable)")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    fn push(&mut self, severity: Severity, kind: IssueKind) {
        self.issues.push(Issue { severity, kind });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// A power network. Immutable once built; transformations return new values.
#[derive(Clone, Debug)]
pub struct PowerNetwork {
    name: String,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    bus_index: HashMap<BusId, usize>,
    branch_index: HashMap<BranchId, usize>,
    // bus position -> positions of in-service incident branches
    incident: Vec<Vec<usize>>,
}

impl PartialEq for PowerNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.branches == other.branches
    }
}

impl PowerNetwork {
    /// Builds the network and its indexes without validating it. Duplicate
    /// ids resolve to their first occurrence and dangling branches are left
    /// out of the adjacency index; [`validate`](Self::validate) reports both.
    pub fn from_parts(name: impl Into<String>, base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>) -> Self {
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (pos, bus) in buses.iter().enumerate() {
            bus_index.entry(bus.id).or_insert(pos);
        }
        let mut branch_index = HashMap::with_capacity(branches.len());
        for (pos, br) in branches.iter().enumerate() {
            branch_index.entry(br.id.clone()).or_insert(pos);
        }
        let mut incident = vec![Vec::new(); buses.len()];
        for (pos, br) in branches.iter().enumerate() {
            if !br.in_service || branch_index[&br.id] != pos {
                continue;
            }
            if let (Some(&a), Some(&b)) = (bus_index.get(&br.from_bus), bus_index.get(&br.to_bus)) {
                incident[a].push(pos);
                if a != b {
                    incident[b].push(pos);
                }
            }
        }
        PowerNetwork {
            name: name.into(),
            base_mva,
            buses,
            branches,
            bus_index,
            branch_index,
            incident,
        }
    }

    /// Builds the network and rejects it if validation finds any error.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
    ) -> Result<Self, ModelError> {
        let net = Self::from_parts(name, base_mva, buses, branches);
        let report = net.validate();
        if report.has_errors() {
            return Err(ModelError::Invalid(report));
        }
        Ok(net)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_index.get(&id).map(|&i| &self.buses[i])
    }

    pub fn branch(&self, id: &BranchId) -> Option<&Branch> {
        self.branch_index.get(id).map(|&i| &self.branches[i])
    }

    /// In-service branches incident to `bus`.
    pub fn incident_branches(&self, bus: BusId) -> Result<Vec<&BranchId>, ModelError> {
        let pos = *self.bus_index.get(&bus).ok_or(ModelError::UnknownBus(bus))?;
        Ok(self.incident[pos].iter().map(|&b| &self.branches[b].id).collect())
    }

    pub fn total_gen(&self) -> f64 {
        self.buses.iter().map(|b| b.gen_mw).sum()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load_mw).sum()
    }

    pub fn net_injection(&self, bus: BusId) -> Result<f64, ModelError> {
        self.bus(bus).map(Bus::net_injection).ok_or(ModelError::UnknownBus(bus))
    }

    /// Net injection of a set of buses (unknown ids are ignored).
    pub fn cluster_injection(&self, cluster: &BTreeSet<BusId>) -> f64 {
        cluster
            .iter()
            .filter_map(|b| self.bus(*b))
            .map(Bus::net_injection)
            .sum()
    }

    /// All in-service branches with exactly one endpoint in `cluster1`.
    pub fn cut_between(&self, cluster1: &BTreeSet<BusId>) -> Result<BTreeSet<BranchId>, ModelError> {
        if cluster1.is_empty() {
            return Err(ModelError::InvalidCluster);
        }
        for b in cluster1 {
            if !self.bus_index.contains_key(b) {
                return Err(ModelError::UnknownBus(*b));
            }
        }
        let distinct: BTreeSet<BusId> = self.buses.iter().map(|b| b.id).collect();
        if cluster1.len() >= distinct.len() {
            return Err(ModelError::InvalidCluster);
        }
        Ok(self
            .branches
            .iter()
            .filter(|br| br.in_service)
            .filter(|br| cluster1.contains(&br.from_bus) != cluster1.contains(&br.to_bus))
            .map(|br| br.id.clone())
            .collect())
    }

    /// Connected components over in-service branches, each sorted, listed
    /// in order of their smallest bus id.
    pub fn components(&self) -> Vec<Vec<BusId>> {
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.buses[i].id);
        let mut out = Vec::new();
        for start in order {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![self.buses[start].id];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &br in &self.incident[u] {
                    let b = &self.branches[br];
                    let other = if self.bus_index[&b.from_bus] == u {
                        b.to_bus
                    } else {
                        b.from_bus
                    };
                    let v = self.bus_index[&other];
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(other);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut seen_bus = BTreeSet::new();
        for bus in &self.buses {
            if !seen_bus.insert(bus.id) {
                report.push(Severity::Error, IssueKind::DuplicateBus { bus: bus.id });
            }
            if bus.gen_mw < 0.0 || bus.load_mw < 0.0 || !bus.gen_mw.is_finite() || !bus.load_mw.is_finite() {
                report.push(Severity::Error, IssueKind::NegativeInjection { bus: bus.id });
            }
        }
        let mut seen_branch = BTreeSet::new();
        for br in &self.branches {
            if !seen_branch.insert(br.id.clone()) {
                report.push(Severity::Error, IssueKind::DuplicateBranch { branch: br.id.clone() });
            }
            for end in [br.from_bus, br.to_bus] {
                if !self.bus_index.contains_key(&end) {
                    report.push(
                        Severity::Error,
                        IssueKind::DanglingEndpoint {
                            branch: br.id.clone(),
                            bus: end,
                        },
                    );
                }
            }
            if br.from_bus == br.to_bus {
                report.push(Severity::Error, IssueKind::SelfLoop { branch: br.id.clone() });
            }
            if !(br.rating_mw > 0.0) || !br.rating_mw.is_finite() {
                report.push(
                    Severity::Error,
                    IssueKind::NonPositiveRating {
                        branch: br.id.clone(),
                        rating_mw: br.rating_mw,
                    },
                );
            }
            match br.reactance_pu {
                Some(x) if !(x > 0.0) => report.push(
                    Severity::Error,
                    IssueKind::NonPositiveReactance { branch: br.id.clone() },
                ),
                None if br.in_service => {
                    report.push(Severity::Warning, IssueKind::MissingReactance { branch: br.id.clone() })
                }
                _ => {}
            }
        }
        let gen = self.total_gen();
        let load = self.total_load();
        let mismatch = gen - load;
        if mismatch.abs() > BALANCE_TOLERANCE_MW {
            report.push(
                Severity::Error,
                IssueKind::Imbalance {
                    gen_mw: gen,
                    load_mw: load,
                    mismatch_mw: mismatch,
                },
            );
        }
        let comps = self.components();
        if comps.len() > 1 {
            let example = comps.iter().min_by_key(|c| c.len()).cloned().unwrap_or_default();
            report.push(
                Severity::Error,
                IssueKind::Disconnected {
                    components: comps.len(),
                    example,
                },
            );
        }
        report
    }

    /// Assigns the generation/load mismatch to `slack`'s generation.
    pub fn with_auto_slack(&self, slack: BusId) -> Result<Self, ModelError> {
        let pos = *self.bus_index.get(&slack).ok_or(ModelError::UnknownBus(slack))?;
        let mismatch = self.total_load() - self.total_gen();
        let mut buses = self.buses.clone();
        let gen = buses[pos].gen_mw + mismatch;
        if gen < -BALANCE_TOLERANCE_MW {
            return Err(ModelError::NegativeSlack {
                bus: slack,
                gen_mw: gen,
            });
        }
        buses[pos].gen_mw = gen.max(0.0);
        Ok(Self::from_parts(
            self.name.clone(),
            self.base_mva,
            buses,
            self.branches.clone(),
        ))
    }

    /// Replaces ratings for the listed branches.
    pub fn with_ratings(&self, ratings: &BTreeMap<BranchId, f64>) -> Result<Self, ModelError> {
        let mut branches = self.branches.clone();
        for (id, rating) in ratings {
            let pos = *self
                .branch_index
                .get(id)
                .ok_or_else(|| ModelError::UnknownBranch(id.clone()))?;
            branches[pos].rating_mw = *rating;
        }
        Ok(Self::from_parts(
            self.name.clone(),
            self.base_mva,
            self.buses.clone(),
            branches,
        ))
    }

    /// Replaces generation and load on the listed buses.
    pub fn with_injections(&self, injections: &BTreeMap<BusId, (f64, f64)>) -> Result<Self, ModelError> {
        let mut buses = self.buses.clone();
        for (id, (gen, load)) in injections {
            let pos = *self.bus_index.get(id).ok_or(ModelError::UnknownBus(*id))?;
            buses[pos].gen_mw = *gen;
            buses[pos].load_mw = *load;
        }
        Ok(Self::from_parts(
            self.name.clone(),
            self.base_mva,
            buses,
            self.branches.clone(),
        ))
    }

    /// Scales every injection by `factor`; balance is preserved.
    pub fn with_scaled_injections(&self, factor: f64) -> Result<Self, ModelError> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(ModelError::InvalidScale(factor));
        }
        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id,
                gen_mw: b.gen_mw * factor,
                load_mw: b.load_mw * factor,
            })
            .collect();
        Ok(Self::from_parts(
            self.name.clone(),
            self.base_mva,
            buses,
            self.branches.clone(),
        ))
    }

    /// Marks a branch out of service.
    pub fn with_outage(&self, id: &BranchId) -> Result<Self, ModelError> {
        let pos = *self
            .branch_index
            .get(id)
            .ok_or_else(|| ModelError::UnknownBranch(id.clone()))?;
        let mut branches = self.branches.clone();
        branches[pos].in_service = false;
        Ok(Self::from_parts(
            self.name.clone(),
            self.base_mva,
            self.buses.clone(),
            branches,
        ))
    }

    /// Collapses parallel in-service circuits between the same bus pair into
    /// one branch: ratings add, reactances combine in parallel. The merged
    /// branch keeps the first circuit's orientation and takes the id
    /// `"{from}-{to}"`.
    pub fn merge_parallel(&self) -> Self {
        let mut groups: BTreeMap<(BusId, BusId), Vec<usize>> = BTreeMap::new();
        let mut order = Vec::new();
        for (pos, br) in self.branches.iter().enumerate() {
            if !br.in_service {
                continue;
            }
            let key = if br.from_bus <= br.to_bus {
                (br.from_bus, br.to_bus)
            } else {
                (br.to_bus, br.from_bus)
            };
            let entry = groups.entry(key).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push(pos);
        }
        let mut branches: Vec<Branch> = Vec::with_capacity(self.branches.len());
        let mut emitted = BTreeSet::new();
        for (pos, br) in self.branches.iter().enumerate() {
            if !br.in_service {
                branches.push(br.clone());
                continue;
            }
            let key = if br.from_bus <= br.to_bus {
                (br.from_bus, br.to_bus)
            } else {
                (br.to_bus, br.from_bus)
            };
            let members = &groups[&key];
            if members.len() == 1 {
                branches.push(br.clone());
                continue;
            }
            if members[0] != pos || !emitted.insert(key) {
                continue;
            }
            let rating = members.iter().map(|&m| self.branches[m].rating_mw).sum();
            let reactance = members
                .iter()
                .map(|&m| self.branches[m].reactance_pu.map(|x| 1.0 / x))
                .sum::<Option<f64>>()
                .map(|y| 1.0 / y);
            branches.push(Branch {
                id: BranchId(format!("{}-{}", br.from_bus, br.to_bus)),
                from_bus: br.from_bus,
                to_bus: br.to_bus,
                rating_mw: rating,
                reactance_pu: reactance,
                in_service: true,
            });
        }
        Self::from_parts(self.name.clone(), self.base_mva, self.buses.clone(), branches)
    }
}
