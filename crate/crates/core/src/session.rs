//! Event-sourced analysis session: base flow and sweep, then per-outage
//! update, shortlist and partial re-test, with snapshots for undo.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{ft_sweep, FtError, FtResult};
use crate::fixtures;
use crate::flowgraph::{FlowError, FlowState};
use crate::io::{IoError, Report, ReportRow, ScenarioEvent, ScenarioFile, SpecialEntry, Timings};
use crate::model::{BranchId, BusId, ModelError, PowerNetwork};
use crate::netflow::{build_flow, NetflowError, Ordering};
use crate::shortlist::{CertificateStore, StaleStore};
use crate::topology::Topology;
use crate::update::{apply_outage, UpdateResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Nominal,
    /// The last outage left a deficit; a remedial action is required.
    Saturated,
    /// The last outage split off a balanced island.
    Islanded,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Nominal => "nominal",
            Status::Saturated => "saturated",
            Status::Islanded => "islanded",
        })
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is {0}; a remedial action or undo is required first")]
    NotNominal(Status),
    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),
    #[error("branch {0} is already out of service")]
    NotLive(BranchId),
    #[error("event log is empty")]
    EmptyLog,
    #[error("reduction must be positive, got {0} MW")]
    NonPositiveReduction(f64),
    #[error("branches {0:?} do not split the live network in two")]
    InvalidCut(Vec<BranchId>),
    #[error("reduction of {reduce_by_mw} MW exceeds the cut transfer of {transfer_mw} MW")]
    ReductionExceedsTransfer { reduce_by_mw: f64, transfer_mw: f64 },
    #[error("scaling would make the injection at bus {0} negative")]
    NegativeInjection(BusId),
    #[error("feasibility test of {branch} failed: {source}")]
    Ft { branch: BranchId, source: FtError },
    #[error(transparent)]
    Netflow(#[from] NetflowError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stale(#[from] StaleStore),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Options {
    /// Re-test only shortlisted branches after an outage; `false` re-tests
    /// every branch.
    pub shortlist: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { shortlist: true }
    }
}

/// Outcome of one event. Equality ignores `timings`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: usize,
    pub event: ScenarioEvent,
    pub update: Option<UpdateResult>,
    /// Branches whose test was re-run.
    pub retested: Vec<BranchId>,
    pub results: Vec<FtResult>,
    pub new_specials: Vec<FtResult>,
    pub cleared_specials: Vec<BranchId>,
    pub status: Status,
    pub timings: Timings,
}

impl PartialEq for EventRecord {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index
            && self.event == other.event
            && self.update == other.update
            && self.retested == other.retested
            && self.results == other.results
            && self.new_specials == other.new_specials
            && self.cleared_specials == other.cleared_specials
            && self.status == other.status
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub network: PowerNetwork,
    pub state: FlowState,
    pub store: CertificateStore,
    pub results: BTreeMap<BranchId, FtResult>,
    pub status: Status,
}

impl Snapshot {
    /// Branches that are special and not radial, by id.
    pub fn specials(&self) -> impl Iterator<Item = &FtResult> {
        self.results.values().filter(|r| is_special(r))
    }
}

fn is_special(r: &FtResult) -> bool {
    r.special && !r.radial
}

#[derive(Clone, Debug)]
pub struct Session {
    ordering: Ordering,
    options: Options,
    base: Arc<Snapshot>,
    base_timings: Timings,
    current: Arc<Snapshot>,
    log: Vec<EventRecord>,
    history: Vec<Arc<Snapshot>>,
}

fn sweep(state: &FlowState, only: Option<&BTreeSet<BranchId>>) -> Result<Vec<FtResult>, SessionError> {
    let out = ft_sweep(state, only);
    if let Some((branch, source)) = out.errors.into_iter().next() {
        return Err(SessionError::Ft { branch, source });
    }
    Ok(out.results)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn specials_of(results: &BTreeMap<BranchId, FtResult>) -> BTreeSet<BranchId> {
    results
        .values()
        .filter(|r| is_special(r))
        .map(|r| r.branch.clone())
        .collect()
}

fn diff(before: &BTreeMap<BranchId, FtResult>, after: &BTreeMap<BranchId, FtResult>) -> (Vec<FtResult>, Vec<BranchId>) {
    let old = specials_of(before);
    let new = specials_of(after);
    (
        new.difference(&old).map(|b| after[b].clone()).collect(),
        old.difference(&new).cloned().collect(),
    )
}

impl Session {
    /// Builds the base flow and runs the full sweep.
    pub fn start(network: PowerNetwork, ordering: Ordering) -> Result<Self, SessionError> {
        Self::start_with(network, ordering, Options::default())
    }

    pub fn start_with(network: PowerNetwork, ordering: Ordering, options: Options) -> Result<Self, SessionError> {
        let report = network.validate();
        if report.has_errors() {
            return Err(ModelError::Invalid(report).into());
        }
        let t0 = Instant::now();
        let state = build_flow(&network, ordering)?;
        let t_flow = t0.elapsed();
        let results = sweep(&state, None)?;
        let t_ft = t0.elapsed() - t_flow;
        let store = CertificateStore::from_results(&results);
        let results = results.into_iter().map(|r| (r.branch.clone(), r)).collect();
        let base = Arc::new(Snapshot {
            network,
            state,
            store,
            results,
            status: Status::Nominal,
        });
        Ok(Session {
            ordering,
            options,
            base_timings: Timings {
                ups_s: secs(t_flow),
                sa_s: 0.0,
                ft_s: secs(t_ft),
                total_s: secs(t0.elapsed()),
            },
            current: base.clone(),
            base,
            log: Vec::new(),
            history: Vec::new(),
        })
    }

    /// Starts from a scenario's case section and applies its events in
    /// order. `ordering` overrides the scenario seed when given.
    pub fn run_scenario(
        spec: &ScenarioFile,
        base_dir: Option<&Path>,
        ordering: Option<Ordering>,
        options: Options,
    ) -> Result<Self, SessionError> {
        let (network, _) = fixtures::prepare(spec, base_dir)?;
        let ordering = ordering.unwrap_or(match spec.seed {
            Some(s) => Ordering::Seeded(s),
            None => Ordering::Deterministic,
        });
        let mut session = Self::start_with(network, ordering, options)?;
        for ev in &spec.events {
            session.apply(ev.clone())?;
        }
        Ok(session)
    }

    /// Rebuilds a session from a base network and an event list.
    pub fn replay(
        network: PowerNetwork,
        ordering: Ordering,
        options: Options,
        events: impl IntoIterator<Item = ScenarioEvent>,
    ) -> Result<Self, SessionError> {
        let mut session = Self::start_with(network, ordering, options)?;
        for ev in events {
            session.apply(ev)?;
        }
        Ok(session)
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn options(&self) -> Options {
        self.options
    }

    pub fn base(&self) -> &Snapshot {
        &self.base
    }

    pub fn base_timings(&self) -> Timings {
        self.base_timings
    }

    pub fn current(&self) -> &Snapshot {
        &self.current
    }

    pub fn network(&self) -> &PowerNetwork {
        &self.current.network
    }

    pub fn state(&self) -> &FlowState {
        &self.current.state
    }

    pub fn status(&self) -> Status {
        self.current.status
    }

    pub fn results(&self) -> &BTreeMap<BranchId, FtResult> {
        &self.current.results
    }

    pub fn specials(&self) -> Vec<&FtResult> {
        self.current.specials().collect()
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    /// Number of events applied; clients compare it to detect staleness.
    pub fn head(&self) -> usize {
        self.log.len()
    }

    pub fn apply(&mut self, event: ScenarioEvent) -> Result<&EventRecord, SessionError> {
        match event {
            ScenarioEvent::Outage { branch } => self.apply_event(&branch),
            ScenarioEvent::ScaleInjections { factor } => self.scale_injections(factor),
            ScenarioEvent::Remedial { cut, reduce_by_mw } => {
                let cut: BTreeSet<BranchId> = cut.into_iter().collect();
                self.remedial_scale(&cut, reduce_by_mw)
            }
        }
    }

    pub fn apply_event(&mut self, branch: &BranchId) -> Result<&EventRecord, SessionError> {
        let (next, record) = self.compute_outage(branch)?;
        Ok(self.commit(next, record))
    }

    /// Same computation as [`Session::apply_event`], leaving the session
    /// untouched.
    pub fn what_if(&self, branch: &BranchId) -> Result<EventRecord, SessionError> {
        self.compute_outage(branch).map(|(_, r)| r)
    }

    fn commit(&mut self, next: Snapshot, record: EventRecord) -> &EventRecord {
        let prev = std::mem::replace(&mut self.current, Arc::new(next));
        self.history.push(prev);
        self.log.push(record);
        self.log.last().expect("just pushed")
    }

    fn compute_outage(&self, branch: &BranchId) -> Result<(Snapshot, EventRecord), SessionError> {
        let cur = &self.current;
        if cur.status != Status::Nominal {
            return Err(SessionError::NotNominal(cur.status));
        }
        if cur.network.branch(branch).is_none() {
            return Err(SessionError::UnknownBranch(branch.clone()));
        }
        let topo = cur.state.topology();
        let ix = topo
            .branch_ix(branch)
            .map_err(|_| SessionError::NotLive(branch.clone()))?;
        if cur.state.is_removed(ix) {
            return Err(SessionError::NotLive(branch.clone()));
        }

        let t0 = Instant::now();
        let (state, update) = apply_outage(&cur.state, branch)?;
        let t_ups = t0.elapsed();

        let shortlist: BTreeSet<BranchId> = if self.options.shortlist {
            let mut s = cur.store.shortlist(&update, cur.store.generation())?;
            // Branches that just became bridges flip to radial without any
            // certificate member changing.
            let before = topo.bridges(cur.state.removed_mask());
            let after = topo.bridges(state.removed_mask());
            s.extend(
                topo.branches()
                    .filter(|b| after[b.index()] && !before[b.index()])
                    .map(|b| topo.branch_id(b).clone())
                    .filter(|id| cur.results.contains_key(id)),
            );
            s
        } else {
            state.live_ids()
        };
        let t_sa = t0.elapsed() - t_ups;

        let retest: BTreeSet<BranchId> = shortlist
            .into_iter()
            .filter(|id| topo.branch_ix(id).is_ok_and(|b| !state.is_removed(b)))
            .collect();
        let fresh = sweep(&state, Some(&retest))?;
        let t_ft = t0.elapsed() - t_ups - t_sa;

        let mut results = cur.results.clone();
        let mut store = cur.store.clone();
        let mut gone: Vec<BranchId> = vec![branch.clone()];
        gone.extend(
            retest
                .iter()
                .filter(|id| !fresh.iter().any(|r| &r.branch == *id))
                .cloned(),
        );
        for id in &gone {
            results.remove(id);
        }
        store.forget(&gone);
        for r in &fresh {
            results.insert(r.branch.clone(), r.clone());
        }
        store.refresh(&fresh);

        let status = if update.deficit_mw > 0.0 {
            Status::Saturated
        } else if update.islanding.is_some() {
            Status::Islanded
        } else {
            Status::Nominal
        };
        let (new_specials, cleared_specials) = diff(&cur.results, &results);
        let network = cur.network.with_outage(branch)?;
        let record = EventRecord {
            index: self.log.len() + 1,
            event: ScenarioEvent::Outage { branch: branch.clone() },
            update: Some(update),
            retested: retest.into_iter().collect(),
            results: fresh,
            new_specials,
            cleared_specials,
            status,
            timings: Timings {
                ups_s: secs(t_ups),
                sa_s: secs(t_sa),
                ft_s: secs(t_ft),
                total_s: secs(t0.elapsed()),
            },
        };
        let next = Snapshot {
            network,
            state,
            store,
            results,
            status,
        };
        Ok((next, record))
    }

    /// Rebuilds flow and sweep on a network with new injections.
    fn rebuild(&mut self, network: PowerNetwork, event: ScenarioEvent) -> Result<&EventRecord, SessionError> {
        let t0 = Instant::now();
        let state = crate::netflow::build_flow_on(Arc::new(Topology::new(&network)), self.ordering)?;
        let t_flow = t0.elapsed();
        let fresh = sweep(&state, None)?;
        let t_ft = t0.elapsed() - t_flow;
        let store = CertificateStore::from_results(&fresh);
        let results: BTreeMap<BranchId, FtResult> = fresh.iter().map(|r| (r.branch.clone(), r.clone())).collect();
        let (new_specials, cleared_specials) = diff(&self.current.results, &results);
        let record = EventRecord {
            index: self.log.len() + 1,
            event,
            update: None,
            retested: fresh.iter().map(|r| r.branch.clone()).collect(),
            results: fresh,
            new_specials,
            cleared_specials,
            status: Status::Nominal,
            timings: Timings {
                ups_s: secs(t_flow),
                sa_s: 0.0,
                ft_s: secs(t_ft),
                total_s: secs(t0.elapsed()),
            },
        };
        let next = Snapshot {
            network,
            state,
            store,
            results,
            status: Status::Nominal,
        };
        Ok(self.commit(next, record))
    }

    /// Lowers the transfer across `cut` by `reduce_by_mw`: generation on the
    /// exporting side and load on the importing side are scaled uniformly,
    /// then the flow and sweep are rebuilt.
    pub fn remedial_scale(
        &mut self,
        cut: &BTreeSet<BranchId>,
        reduce_by_mw: f64,
    ) -> Result<&EventRecord, SessionError> {
        if !(reduce_by_mw > 0.0) {
            return Err(SessionError::NonPositiveReduction(reduce_by_mw));
        }
        let network = &self.current.network;
        let sides = split(network, cut)?;
        let (exporting, importing) = if network.cluster_injection(&sides.0) > 0.0 {
            (sides.0, sides.1)
        } else {
            (sides.1, sides.0)
        };
        let transfer = network.cluster_injection(&exporting);
        if reduce_by_mw > transfer {
            return Err(SessionError::ReductionExceedsTransfer {
                reduce_by_mw,
                transfer_mw: transfer,
            });
        }
        let sum = |ids: &BTreeSet<BusId>, f: fn(&crate::model::Bus) -> f64| -> f64 {
            ids.iter().filter_map(|b| network.bus(*b)).map(f).sum()
        };
        let (g_e, l_e) = (sum(&exporting, |b| b.gen_mw), sum(&exporting, |b| b.load_mw));
        let (g_i, l_i) = (sum(&importing, |b| b.gen_mw), sum(&importing, |b| b.load_mw));
        let target = transfer - reduce_by_mw;
        let alpha = (target + l_e) / g_e;
        let beta = (g_i + target) / l_i;
        let mut injections = BTreeMap::new();
        for id in exporting.iter().chain(&importing) {
            let bus = network.bus(*id).ok_or(ModelError::UnknownBus(*id))?;
            let (gen, load) = if exporting.contains(id) {
                (bus.gen_mw * alpha, bus.load_mw)
            } else {
                (bus.gen_mw, bus.load_mw * beta)
            };
            if !(gen >= 0.0 && load >= 0.0) {
                return Err(SessionError::NegativeInjection(*id));
            }
            injections.insert(*id, (gen, load));
        }
        let scaled = network.with_injections(&injections)?;
        let event = ScenarioEvent::Remedial {
            cut: cut.iter().cloned().collect(),
            reduce_by_mw,
        };
        self.rebuild(scaled, event)
    }

    /// Scales every injection, then rebuilds flow and sweep.
    pub fn scale_injections(&mut self, factor: f64) -> Result<&EventRecord, SessionError> {
        let scaled = self.current.network.with_scaled_injections(factor)?;
        self.rebuild(scaled, ScenarioEvent::ScaleInjections { factor })
    }

    /// Drops the last event and restores the snapshot taken before it.
    pub fn undo(&mut self) -> Result<EventRecord, SessionError> {
        let prev = self.history.pop().ok_or(SessionError::EmptyLog)?;
        self.current = prev;
        Ok(self.log.pop().expect("log and history have equal length"))
    }

    /// One row for the base case, then one per event.
    pub fn report(&self, with_timings: bool) -> Report {
        let entry = |r: &FtResult| SpecialEntry {
            branch: r.branch.clone(),
            kcrit: r.kcrit.iter().cloned().collect(),
            margin_mw: r.margin_mw,
        };
        let mut rows = vec![ReportRow {
            index: 0,
            event: "base case".into(),
            status: Status::Nominal.to_string(),
            deficit_mw: 0.0,
            retested: self.base.results.len(),
            new_specials: self.base.specials().map(entry).collect(),
            timings: with_timings.then_some(self.base_timings),
        }];
        rows.extend(self.log.iter().map(|rec| ReportRow {
            index: rec.index,
            event: rec.event.to_string(),
            status: rec.status.to_string(),
            deficit_mw: rec.update.as_ref().map_or(0.0, |u| u.deficit_mw),
            retested: rec.retested.len(),
            new_specials: rec.new_specials.iter().map(entry).collect(),
            timings: with_timings.then_some(rec.timings),
        }));
        Report {
            case: self.base.network.name().to_owned(),
            rows,
        }
    }
}

/// The two sides of `cut`, which must be exactly the set of live branches
/// between two connected halves of the network.
fn split(network: &PowerNetwork, cut: &BTreeSet<BranchId>) -> Result<(BTreeSet<BusId>, BTreeSet<BusId>), SessionError> {
    let invalid = || SessionError::InvalidCut(cut.iter().cloned().collect());
    let mut opened = network.clone();
    for id in cut {
        let br = network
            .branch(id)
            .ok_or_else(|| SessionError::UnknownBranch(id.clone()))?;
        if !br.in_service {
            return Err(SessionError::NotLive(id.clone()));
        }
        opened = opened.with_outage(id)?;
    }
    let comps = opened.components();
    if comps.len() != 2 {
        return Err(invalid());
    }
    let a: BTreeSet<BusId> = comps[0].iter().copied().collect();
    if network.cut_between(&a)? != *cut {
        return Err(invalid());
    }
    Ok((a, comps[1].iter().copied().collect()))
}
