//! Detection of saturated cut-sets in meshed power networks.
//!
//! A feasible flow is built from bus injections, each loaded branch is
//! tested for how much of its flow can be rerouted around it, and the
//! analysis is kept current as outages arrive.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod feasibility;
pub mod fixtures;
pub mod flowgraph;
pub mod io;
pub mod model;
pub mod netflow;
pub mod oracles;
pub mod session;
pub mod shortlist;
pub mod synth;
pub mod topology;
pub mod update;

pub use feasibility::{ft_edge, ft_sweep, FtError, FtResult};
pub use flowgraph::{FlowError, FlowState};
pub use model::{Branch, BranchId, Bus, BusId, PowerNetwork};
pub use netflow::{build_flow, cut_transfer, NetflowError, Ordering};
pub use session::{EventRecord, Session, SessionError, Status};
pub use update::{apply_outage, UpdateResult};
