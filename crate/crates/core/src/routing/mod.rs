//! Semi-static routing: capacity-filtered path selection, route reservation
//! and firm, anisotropy-aware scheduling of individual TUs.
//!
//! Routing runs on a traversal graph. A node is one way through one module
//! (an internal link in one orientation); an arc joins two traversals whose
//! exit and entry interfaces are physically connected. A path's process
//! time is the sum of the traversal times before the sink, i.e. the time
//! until the TU is handed to the sink module.

mod graph;
mod routes;
mod schedule;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{InterfaceId, ModuleId, RelationId, RouteId, TuId};
use crate::time::SimTime;

pub(crate) use graph::build_subgraph;
pub use graph::{feasible_subgraph, shortest_process_time_path, traversals_of, FeasibleSubgraph, RoutePath};
pub use routes::{
    negotiate_all, MaterialFlowRelation, RenegotiationOutcome, RouteSegment, RouteSet, RouteStatus, SemiStaticRoute,
    Trigger,
};
pub use schedule::{
    release_schedule, schedule_transport, Reservation, ReservationTable, ReservationTables, Schedule, ScheduleOptions,
    Slot,
};

/// Numeric slack for capacity comparisons in TUs/minute.
pub const CAPACITY_EPS: f64 = 1e-9;

/// One pass of a TU through a module along one internal link.
///
/// The derived ordering (module id first, then interfaces) is the tie-break
/// order for equally fast paths.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Traversal {
    pub module_id: ModuleId,
    pub entry: InterfaceId,
    pub exit: InterfaceId,
    /// Index into the module's `internal_links`.
    pub link: usize,
    /// `true` when travelling from the link's `from_interface` to its `to_interface`.
    pub forward: bool,
    pub process_time_ms: u64,
    pub reversible: bool,
    pub concurrent_tus: u32,
}

impl Traversal {
    pub fn link_key(&self) -> LinkKey {
        LinkKey { module_id: self.module_id.clone(), link: self.link }
    }
}

/// Capacity pool of one internal link. Both orientations of a reversible link draw from the same pool.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub module_id: ModuleId,
    pub link: usize,
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.module_id, self.link)
    }
}

/// Why an operator-forced path was refused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum OverrideViolation {
    EmptyPath,
    WrongEndpoints { expected_source: ModuleId, expected_sink: ModuleId },
    UnknownModule { module_id: ModuleId },
    NotOperational { module_id: ModuleId },
    RevisitsModule { module_id: ModuleId },
    Disconnected { from: ModuleId, to: ModuleId },
    CapacityExceeded { module_id: ModuleId },
}

impl fmt::Display for OverrideViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverrideViolation::EmptyPath => write!(f, "forced path is empty"),
            OverrideViolation::WrongEndpoints { expected_source, expected_sink } => {
                write!(f, "forced path must run from `{expected_source}` to `{expected_sink}`")
            }
            OverrideViolation::UnknownModule { module_id } => {
                write!(f, "unknown module `{module_id}`")
            }
            OverrideViolation::NotOperational { module_id } => {
                write!(f, "module `{module_id}` is not operational")
            }
            OverrideViolation::RevisitsModule { module_id } => {
                write!(f, "forced path visits `{module_id}` twice")
            }
            OverrideViolation::Disconnected { from, to } => {
                write!(f, "disconnected path: no transfer from `{from}` to `{to}`")
            }
            OverrideViolation::CapacityExceeded { module_id } => {
                write!(f, "capacity violation at module `{module_id}`")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("source module `{0}` is not part of the topology")]
    SourceAbsent(ModuleId),
    #[error("sink module `{0}` is not part of the topology")]
    SinkAbsent(ModuleId),
    #[error("relation `{0}` is invalid: {1}")]
    InvalidRelation(RelationId, String),
    #[error("relation `{0}` already has an active route")]
    AlreadyRouted(RelationId),
    #[error("no_capacity_path: no feasible path for relation `{0}`")]
    NoCapacityPath(RelationId),
    #[error("unknown relation `{0}`")]
    UnknownRelation(RelationId),
    #[error("unknown route `{0}`")]
    UnknownRoute(RouteId),
    #[error("override rejected: {0}")]
    OverrideRejected(OverrideViolation),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no slot for {tu} within the scheduling horizon (earliest candidate {earliest})")]
    HorizonExceeded { tu: TuId, earliest: SimTime },
    #[error("route has no hops")]
    EmptyRoute,
    #[error("unknown {0}")]
    UnknownTu(TuId),
}
