//! Geometric connection derivation and the merged global topology.
//!
//! Modules are placed on a rectilinear grid. Two interfaces form a
//! connection when they meet at the same point, face each other and serve
//! the same TU class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{InterfaceId, ModuleId};
use crate::model::{Flow, ModuleDescriptor, ModuleStatus, OperationalState, PhysicalInterface};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    fn apply(self, (x, y): (f64, f64)) -> (f64, f64) {
        match self {
            Rotation::R0 => (x, y),
            Rotation::R90 => (-y, x),
            Rotation::R180 => (-x, -y),
            Rotation::R270 => (y, -x),
        }
    }
}

impl TryFrom<u16> for Rotation {
    type Error = String;
    fn try_from(deg: u16) -> Result<Self, String> {
        match deg {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(format!("rotation must be 0, 90, 180 or 270 degrees, got {other}")),
        }
    }
}

impl From<Rotation> for u16 {
    fn from(r: Rotation) -> u16 {
        r.degrees()
    }
}

/// Where a module sits: `global_position` is the lower-left corner of its rotated footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub module_id: ModuleId,
    pub global_position: (f64, f64),
    pub rotation: Rotation,
}

impl Placement {
    pub fn new(module_id: impl Into<ModuleId>, x: f64, y: f64, rotation: Rotation) -> Self {
        Placement { module_id: module_id.into(), global_position: (x, y), rotation }
    }
}

/// Axis-aligned rectangle in global coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl Rect {
    fn overlap_area(&self, other: &Rect) -> f64 {
        let dx = self.max.0.min(other.max.0) - self.min.0.max(other.min.0);
        let dy = self.max.1.min(other.max.1) - self.min.1.max(other.min.1);
        if dx > 0.0 && dy > 0.0 {
            dx * dy
        } else {
            0.0
        }
    }

    fn expanded(&self, by: f64) -> Rect {
        Rect { min: (self.min.0 - by, self.min.1 - by), max: (self.max.0 + by, self.max.1 + by) }
    }

    fn touches(&self, other: &Rect) -> bool {
        self.min.0 <= other.max.0 && other.min.0 <= self.max.0 && self.min.1 <= other.max.1 && other.min.1 <= self.max.1
    }
}

/// Global footprint of a placed module.
pub fn global_footprint(descriptor: &ModuleDescriptor, placement: &Placement) -> Rect {
    let (min, max) = rotated_bounds(descriptor.footprint.width, descriptor.footprint.length, placement.rotation);
    let (gx, gy) = placement.global_position;
    Rect { min: (gx, gy), max: (gx + max.0 - min.0, gy + max.1 - min.1) }
}

fn rotated_bounds(w: f64, l: f64, rotation: Rotation) -> ((f64, f64), (f64, f64)) {
    let corners = [(0.0, 0.0), (w, 0.0), (0.0, l), (w, l)].map(|c| rotation.apply(c));
    let min = corners.iter().fold((f64::INFINITY, f64::INFINITY), |a, c| (a.0.min(c.0), a.1.min(c.1)));
    let max = corners.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |a, c| (a.0.max(c.0), a.1.max(c.1)));
    (min, max)
}

/// Global position and heading of one interface.
pub fn global_interface_pose(
    descriptor: &ModuleDescriptor,
    placement: &Placement,
    iface: &PhysicalInterface,
) -> ((f64, f64), f64) {
    let (min, _) = rotated_bounds(descriptor.footprint.width, descriptor.footprint.length, placement.rotation);
    let (rx, ry) = placement.rotation.apply(iface.local_position);
    let (gx, gy) = placement.global_position;
    let heading = (iface.heading + f64::from(placement.rotation.degrees())).rem_euclid(360.0);
    ((gx + rx - min.0, gy + ry - min.1), heading)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub module_id: ModuleId,
    pub interface_id: InterfaceId,
}

impl Endpoint {
    pub fn new(module_id: impl Into<ModuleId>, interface_id: impl Into<InterfaceId>) -> Self {
        Endpoint { module_id: module_id.into(), interface_id: interface_id.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllowedDirections {
    AToB,
    BToA,
    Both,
}

/// A physical link between interfaces of two neighboring modules.
///
/// Endpoints are stored in ascending order so every pairing has exactly one
/// representation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Connection {
    pub endpoint_a: Endpoint,
    pub endpoint_b: Endpoint,
    pub allowed_directions: AllowedDirections,
}

impl Connection {
    /// Builds a normalized connection from two endpoints and their flows, if the flows are compatible.
    pub fn between(first: (Endpoint, Flow), second: (Endpoint, Flow)) -> Option<Connection> {
        let (a, b) = if first.0 <= second.0 { (first, second) } else { (second, first) };
        let a_to_b = a.1.accepts_outbound() && b.1.accepts_inbound();
        let b_to_a = b.1.accepts_outbound() && a.1.accepts_inbound();
        let allowed_directions = match (a_to_b, b_to_a) {
            (true, true) => AllowedDirections::Both,
            (true, false) => AllowedDirections::AToB,
            (false, true) => AllowedDirections::BToA,
            (false, false) => return None,
        };
        Some(Connection { endpoint_a: a.0, endpoint_b: b.0, allowed_directions })
    }

    pub fn involves(&self, module: &ModuleId) -> bool {
        &self.endpoint_a.module_id == module || &self.endpoint_b.module_id == module
    }

    /// If this connection lets a TU leave `from` through `via`, returns the receiving endpoint.
    pub fn exit_through(&self, from: &Endpoint) -> Option<&Endpoint> {
        if from == &self.endpoint_a
            && matches!(self.allowed_directions, AllowedDirections::AToB | AllowedDirections::Both)
        {
            Some(&self.endpoint_b)
        } else if from == &self.endpoint_b
            && matches!(self.allowed_directions, AllowedDirections::BToA | AllowedDirections::Both)
        {
            Some(&self.endpoint_a)
        } else {
            None
        }
    }

    /// Number of directed module-to-module arcs this connection provides.
    pub fn arc_count(&self) -> usize {
        match self.allowed_directions {
            AllowedDirections::Both => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricTolerance {
    pub position_mm: f64,
    pub heading_deg: f64,
}

impl Default for GeometricTolerance {
    fn default() -> Self {
        GeometricTolerance { position_mm: 25.0, heading_deg: 5.0 }
    }
}

impl GeometricTolerance {
    pub fn with_position(position_mm: f64) -> Self {
        GeometricTolerance { position_mm, ..Default::default() }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("footprints of `{0}` and `{1}` overlap")]
    Overlap(ModuleId, ModuleId),
    #[error("module `{0}` appears more than once")]
    DuplicateModule(ModuleId),
    #[error("placement for `{placement}` paired with descriptor `{descriptor}`")]
    IdMismatch { placement: ModuleId, descriptor: ModuleId },
    #[error("unknown module `{0}`")]
    UnknownModule(ModuleId),
    #[error("contradictory connections reported for {0:?} / {1:?}")]
    Inconsistent(Endpoint, Endpoint),
    #[error("local view of `{0}` contains a connection not involving it")]
    ForeignConnection(ModuleId),
    #[error("negative tolerance")]
    NegativeTolerance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleEntry {
    pub descriptor: ModuleDescriptor,
    pub placement: Placement,
    pub status: ModuleStatus,
}

/// Immutable snapshot of all modules and their connections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    modules: BTreeMap<ModuleId, ModuleEntry>,
    connections: BTreeSet<Connection>,
    revision: u64,
}

impl Topology {
    pub fn empty() -> Self {
        Topology::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn modules(&self) -> &BTreeMap<ModuleId, ModuleEntry> {
        &self.modules
    }

    pub fn module(&self, id: &ModuleId) -> Option<&ModuleEntry> {
        self.modules.get(id)
    }

    pub fn connections(&self) -> &BTreeSet<Connection> {
        &self.connections
    }

    pub fn contains(&self, id: &ModuleId) -> bool {
        self.modules.contains_key(id)
    }

    pub fn is_operational(&self, id: &ModuleId) -> bool {
        self.modules.get(id).is_some_and(|m| m.status.is_operational())
    }

    /// Connections touching one module.
    pub fn connections_of<'a>(&'a self, id: &'a ModuleId) -> impl Iterator<Item = &'a Connection> + 'a {
        self.connections.iter().filter(move |c| c.involves(id))
    }

    /// The connection attached to a given interface, if any.
    pub fn connection_at(&self, endpoint: &Endpoint) -> Option<&Connection> {
        self.connections.iter().find(|c| &c.endpoint_a == endpoint || &c.endpoint_b == endpoint)
    }

    pub fn neighbors(&self, id: &ModuleId) -> BTreeSet<ModuleId> {
        self.connections_of(id)
            .map(|c| {
                if &c.endpoint_a.module_id == id {
                    c.endpoint_b.module_id.clone()
                } else {
                    c.endpoint_a.module_id.clone()
                }
            })
            .collect()
    }

    /// Modules and connections, ignoring the revision counter.
    pub fn same_structure(&self, other: &Topology) -> bool {
        self.modules == other.modules && self.connections == other.connections
    }

    /// New revision with one module's status replaced.
    pub fn with_status(&self, id: &ModuleId, status: ModuleStatus) -> Result<Topology, TopologyError> {
        let mut next = self.clone();
        let entry = next.modules.get_mut(id).ok_or_else(|| TopologyError::UnknownModule(id.clone()))?;
        entry.status = status;
        next.revision += 1;
        Ok(next)
    }

    pub fn placements(&self) -> Vec<(ModuleDescriptor, Placement)> {
        self.modules.values().map(|m| (m.descriptor.clone(), m.placement.clone())).collect()
    }

    /// Builds a topology from scratch through local views, one per module.
    pub fn from_placements(
        placements: &[(ModuleDescriptor, Placement)],
        tolerance: &GeometricTolerance,
    ) -> Result<Topology, TopologyError> {
        let connections = detect_neighbors(placements, tolerance)?;
        let views: Vec<LocalView> = placements
            .iter()
            .map(|(d, p)| LocalView {
                descriptor: d.clone(),
                placement: p.clone(),
                detected_neighbors: connections.iter().filter(|c| c.involves(&p.module_id)).cloned().collect(),
            })
            .collect();
        merge_local_views(&views, &Topology::empty())
    }
}

/// What one module agent knows about its surroundings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalView {
    pub descriptor: ModuleDescriptor,
    pub placement: Placement,
    pub detected_neighbors: Vec<Connection>,
}

struct PlacedInterface<'a> {
    endpoint: Endpoint,
    position: (f64, f64),
    heading: f64,
    iface: &'a PhysicalInterface,
}

fn placed_interfaces<'a>(descriptor: &'a ModuleDescriptor, placement: &'a Placement) -> Vec<PlacedInterface<'a>> {
    descriptor
        .interfaces
        .iter()
        .map(|iface| {
            let (position, heading) = global_interface_pose(descriptor, placement, iface);
            PlacedInterface {
                endpoint: Endpoint::new(placement.module_id.clone(), iface.interface_id.clone()),
                position,
                heading,
                iface,
            }
        })
        .collect()
}

fn headings_opposite(a: f64, b: f64, tolerance_deg: f64) -> bool {
    let d = (a - b).rem_euclid(360.0);
    (d - 180.0).abs() <= tolerance_deg
}

fn match_interfaces(a: &PlacedInterface<'_>, b: &PlacedInterface<'_>, tol: &GeometricTolerance) -> Option<Connection> {
    let dist = (a.position.0 - b.position.0).hypot(a.position.1 - b.position.1);
    if dist > tol.position_mm
        || !headings_opposite(a.heading, b.heading, tol.heading_deg)
        || a.iface.tu_class != b.iface.tu_class
    {
        return None;
    }
    Connection::between((a.endpoint.clone(), a.iface.flow), (b.endpoint.clone(), b.iface.flow))
}

fn check_placements(
    placements: &[(ModuleDescriptor, Placement)],
    tol: &GeometricTolerance,
) -> Result<(), TopologyError> {
    if tol.position_mm < 0.0 || tol.heading_deg < 0.0 {
        return Err(TopologyError::NegativeTolerance);
    }
    let mut ids = BTreeSet::new();
    for (d, p) in placements {
        if d.module_id != p.module_id {
            return Err(TopologyError::IdMismatch { placement: p.module_id.clone(), descriptor: d.module_id.clone() });
        }
        if !ids.insert(&p.module_id) {
            return Err(TopologyError::DuplicateModule(p.module_id.clone()));
        }
    }
    let rects: Vec<_> = placements.iter().map(|(d, p)| (&p.module_id, global_footprint(d, p))).collect();
    for (i, (id_a, ra)) in rects.iter().enumerate() {
        for (id_b, rb) in &rects[i + 1..] {
            if ra.overlap_area(rb) > 1e-6 {
                let (x, y) = if id_a <= id_b { (id_a, id_b) } else { (id_b, id_a) };
                return Err(TopologyError::Overlap((*x).clone(), (*y).clone()));
            }
        }
    }
    Ok(())
}

/// Derives every connection between neighboring modules.
pub fn detect_neighbors(
    placements: &[(ModuleDescriptor, Placement)],
    tolerance: &GeometricTolerance,
) -> Result<BTreeSet<Connection>, TopologyError> {
    check_placements(placements, tolerance)?;
    let placed: Vec<Vec<PlacedInterface<'_>>> = placements.iter().map(|(d, p)| placed_interfaces(d, p)).collect();
    let mut out = BTreeSet::new();
    for (i, a_ifaces) in placed.iter().enumerate() {
        for b_ifaces in &placed[i + 1..] {
            for a in a_ifaces {
                for b in b_ifaces {
                    if let Some(c) = match_interfaces(a, b, tolerance) {
                        out.insert(c);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Unions local views into a new topology revision.
pub fn merge_local_views(views: &[LocalView], previous: &Topology) -> Result<Topology, TopologyError> {
    let mut modules = previous.modules.clone();
    for view in views {
        let id = &view.placement.module_id;
        if &view.descriptor.module_id != id {
            return Err(TopologyError::IdMismatch {
                placement: id.clone(),
                descriptor: view.descriptor.module_id.clone(),
            });
        }
        let status = modules.get(id).map(|m| m.status).unwrap_or(view.descriptor.status);
        modules.insert(
            id.clone(),
            ModuleEntry { descriptor: view.descriptor.clone(), placement: view.placement.clone(), status },
        );
    }

    // Each interface pair may be reported at most one way.
    let mut by_pair: BTreeMap<(Endpoint, Endpoint), Connection> =
        previous.connections.iter().map(|c| ((c.endpoint_a.clone(), c.endpoint_b.clone()), c.clone())).collect();
    let mut fresh: BTreeMap<(Endpoint, Endpoint), Connection> = BTreeMap::new();
    for view in views {
        for c in &view.detected_neighbors {
            if !c.involves(&view.placement.module_id) {
                return Err(TopologyError::ForeignConnection(view.placement.module_id.clone()));
            }
            let key = (c.endpoint_a.clone(), c.endpoint_b.clone());
            if let Some(existing) = fresh.get(&key) {
                if existing != c {
                    return Err(TopologyError::Inconsistent(key.0, key.1));
                }
            }
            fresh.insert(key, c.clone());
        }
    }
    by_pair.extend(fresh);

    let connections: BTreeSet<Connection> = by_pair.into_values().collect();
    let mut used: BTreeMap<&Endpoint, &Connection> = BTreeMap::new();
    for c in &connections {
        for ep in [&c.endpoint_a, &c.endpoint_b] {
            if !modules.contains_key(&ep.module_id) {
                return Err(TopologyError::UnknownModule(ep.module_id.clone()));
            }
            if let Some(other) = used.insert(ep, c) {
                return Err(TopologyError::Inconsistent(other.endpoint_a.clone(), c.endpoint_b.clone()));
            }
        }
    }

    Ok(Topology { modules, connections, revision: previous.revision + 1 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutChange {
    Added { descriptor: ModuleDescriptor, placement: Placement },
    Removed { module_id: ModuleId },
}

/// Applies one layout change, recomputing connections only around the changed module.
///
/// Returns the new topology and the modules whose connection set changed.
pub fn apply_layout_change(
    topology: &Topology,
    change: LayoutChange,
    tolerance: &GeometricTolerance,
) -> Result<(Topology, BTreeSet<ModuleId>), TopologyError> {
    let mut next = topology.clone();
    next.revision += 1;
    let mut hint = BTreeSet::new();
    match change {
        LayoutChange::Removed { module_id } => {
            if next.modules.remove(&module_id).is_none() {
                return Err(TopologyError::UnknownModule(module_id));
            }
            hint.extend(topology.neighbors(&module_id));
            next.connections.retain(|c| !c.involves(&module_id));
            hint.insert(module_id);
        }
        LayoutChange::Added { descriptor, placement } => {
            let id = placement.module_id.clone();
            if descriptor.module_id != id {
                return Err(TopologyError::IdMismatch { placement: id, descriptor: descriptor.module_id });
            }
            if tolerance.position_mm < 0.0 || tolerance.heading_deg < 0.0 {
                return Err(TopologyError::NegativeTolerance);
            }
            if next.modules.contains_key(&id) {
                return Err(TopologyError::DuplicateModule(id));
            }
            let rect = global_footprint(&descriptor, &placement);
            let search = rect.expanded(tolerance.position_mm);
            let new_ifaces = placed_interfaces(&descriptor, &placement);
            let mut found = Vec::new();
            for (other_id, entry) in &next.modules {
                let other_rect = global_footprint(&entry.descriptor, &entry.placement);
                if rect.overlap_area(&other_rect) > 1e-6 {
                    let (x, y) =
                        if &id <= other_id { (id.clone(), other_id.clone()) } else { (other_id.clone(), id.clone()) };
                    return Err(TopologyError::Overlap(x, y));
                }
                if !search.touches(&other_rect) {
                    continue;
                }
                for b in placed_interfaces(&entry.descriptor, &entry.placement) {
                    for a in &new_ifaces {
                        if let Some(c) = match_interfaces(a, &b, tolerance) {
                            hint.insert(other_id.clone());
                            found.push(c);
                        }
                    }
                }
            }
            next.connections.extend(found);
            let status = descriptor.status;
            next.modules.insert(id.clone(), ModuleEntry { descriptor, placement, status });
            hint.insert(id);
        }
    }
    Ok((next, hint))
}

/// Marks a module as removed without dropping it (used while it drains).
pub fn removed_status() -> ModuleStatus {
    ModuleStatus { operational_state: OperationalState::Removed, workload: 0.0 }
}

/// One line of a layout file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutEntry {
    pub module_id: ModuleId,
    /// Descriptor document path, relative to the layout file.
    pub descriptor: String,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_rotation")]
    pub rotation: Rotation,
}

fn default_rotation() -> Rotation {
    Rotation::R0
}

impl LayoutEntry {
    pub fn placement(&self) -> Placement {
        Placement::new(self.module_id.clone(), self.x, self.y, self.rotation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutFile {
    pub schema_version: u32,
    pub placements: Vec<LayoutEntry>,
}
