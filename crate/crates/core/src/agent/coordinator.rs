use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ModuleId, RouteId};
use crate::model::ModuleDescriptor;
use crate::routing::{ReservationTables, RouteSet};
use crate::time::SimTime;
use crate::topology::{apply_layout_change, GeometricTolerance, LayoutChange, Placement, Topology, TopologyError};

/// Names that address framework roles and therefore cannot be module ids.
pub const RESERVED_IDS: [&str; 2] = ["coordinator", "broadcast"];

#[derive(Debug, Error, PartialEq)]
pub enum CoordinatorError {
    #[error("module `{0}` is already registered and alive")]
    DuplicateRegistration(ModuleId),
    #[error("no active coordinator")]
    Inactive,
    #[error("unknown module `{0}`")]
    UnknownModule(ModuleId),
    #[error("module occupied: `{0}` still carries or expects a TU")]
    ModuleOccupied(ModuleId),
    #[error("no module left to host the coordinator")]
    EmptySystem,
    #[error("`{0}` is a reserved name")]
    ReservedId(ModuleId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    /// Where the module's descriptor came from (file path or catalog key).
    pub descriptor_ref: String,
    pub placement: Placement,
    pub registered_at: SimTime,
    pub alive: bool,
}

/// The coordinator's directory of known modules.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    entries: BTreeMap<ModuleId, RegistryEntry>,
}

impl Registry {
    pub fn get(&self, id: &ModuleId) -> Option<&RegistryEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> &BTreeMap<ModuleId, RegistryEntry> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alive(&self) -> BTreeSet<ModuleId> {
        self.entries.iter().filter(|(_, e)| e.alive).map(|(id, _)| id.clone()).collect()
    }

    /// Marks a module as leaving; it stays listed until deregistration completes.
    pub fn mark_leaving(&mut self, id: &ModuleId) -> bool {
        self.entries.get_mut(id).map(|e| e.alive = false).is_some()
    }
}

/// The replicated framework state. Every node holds a copy; only the host acts on it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorState {
    /// Module currently running the active framework instance.
    pub host: Option<ModuleId>,
    pub registry: Registry,
    pub topology: Topology,
    pub routes: RouteSet,
    pub tables: ReservationTables,
    pub tolerance: GeometricTolerance,
}

impl CoordinatorState {
    pub fn new(tolerance: GeometricTolerance) -> Self {
        CoordinatorState { tolerance, ..CoordinatorState::default() }
    }

    pub fn is_active(&self) -> bool {
        self.host.is_some()
    }

    /// Adds a module to registry and topology. Returns the modules whose connections changed.
    pub fn register_module(
        &mut self,
        descriptor: ModuleDescriptor,
        placement: Placement,
        descriptor_ref: impl Into<String>,
        now: SimTime,
    ) -> Result<BTreeSet<ModuleId>, CoordinatorError> {
        if !self.is_active() {
            return Err(CoordinatorError::Inactive);
        }
        let id = placement.module_id.clone();
        if RESERVED_IDS.contains(&id.as_str()) {
            return Err(CoordinatorError::ReservedId(id));
        }
        if self.registry.entries.get(&id).is_some_and(|e| e.alive) || self.topology.contains(&id) {
            return Err(CoordinatorError::DuplicateRegistration(id));
        }
        let (topology, hint) = apply_layout_change(
            &self.topology,
            LayoutChange::Added { descriptor, placement: placement.clone() },
            &self.tolerance,
        )?;
        self.topology = topology;
        self.registry.entries.insert(
            id,
            RegistryEntry { descriptor_ref: descriptor_ref.into(), placement, registered_at: now, alive: true },
        );
        Ok(hint)
    }

    /// Whether any TU is on the module at `now` or booked through it later.
    pub fn is_occupied(&self, id: &ModuleId, now: SimTime) -> bool {
        self.tables.table(id).is_some_and(|t| t.entries().iter().any(|e| e.end > now))
    }

    /// Removes a module. Returns the active routes that crossed it and the connection hint.
    pub fn deregister_module(
        &mut self,
        id: &ModuleId,
        now: SimTime,
    ) -> Result<(BTreeSet<RouteId>, BTreeSet<ModuleId>), CoordinatorError> {
        if !self.is_active() {
            return Err(CoordinatorError::Inactive);
        }
        if !self.registry.entries.contains_key(id) {
            return Err(CoordinatorError::UnknownModule(id.clone()));
        }
        if self.is_occupied(id, now) {
            return Err(CoordinatorError::ModuleOccupied(id.clone()));
        }
        let (topology, hint) =
            apply_layout_change(&self.topology, LayoutChange::Removed { module_id: id.clone() }, &self.tolerance)?;
        let orphaned = self.routes.active_routes().filter(|r| r.contains(id)).map(|r| r.route_id.clone()).collect();
        self.topology = topology;
        self.registry.entries.remove(id);
        Ok((orphaned, hint))
    }
}

/// Picks the smallest alive module id other than `failed`.
pub fn elect_coordinator(alive: &BTreeSet<ModuleId>, failed: Option<&ModuleId>) -> Result<ModuleId, CoordinatorError> {
    alive.iter().find(|m| Some(*m) != failed).cloned().ok_or(CoordinatorError::EmptySystem)
}
