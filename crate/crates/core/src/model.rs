//! Module descriptors: the static knowledge base every module agent carries.
//!
//! A descriptor states what a module can do (abilities), how large it is,
//! where its transfer interfaces sit and how TUs travel between them
//! (internal links). Descriptors are authored offline, one document per
//! module type, and validated before any agent uses them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{InterfaceId, ModuleId};

/// Current version of the descriptor document schema.
pub const DESCRIPTOR_SCHEMA_VERSION: u32 = 1;

const BOUNDARY_EPS_MM: f64 = 0.5;
const HEADING_TOLERANCE_DEG: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Transport,
    Manipulation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbilityKind {
    Transport,
    Buffer,
    Identify,
    Label,
    Lift,
    Rotate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ability {
    pub kind: AbilityKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, ParamValue>,
}

impl Ability {
    pub fn new(kind: AbilityKind) -> Self {
        Ability { kind, parameters: BTreeMap::new() }
    }
}

/// Axis-aligned rectangle in the module's local frame, millimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub width: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Inbound,
    Outbound,
    Bidirectional,
}

impl Flow {
    pub fn accepts_inbound(self) -> bool {
        matches!(self, Flow::Inbound | Flow::Bidirectional)
    }

    pub fn accepts_outbound(self) -> bool {
        matches!(self, Flow::Outbound | Flow::Bidirectional)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalInterface {
    pub interface_id: InterfaceId,
    /// (x, y) in millimeters relative to the module origin.
    pub local_position: (f64, f64),
    /// Outward direction in degrees, counter-clockwise from +x.
    pub heading: f64,
    pub flow: Flow,
    pub tu_class: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalLink {
    pub from_interface: InterfaceId,
    pub to_interface: InterfaceId,
    /// Seconds a TU needs to traverse the link.
    pub process_time: f64,
    /// TUs per minute.
    pub capacity: f64,
    pub reversible: bool,
}

impl InternalLink {
    /// Number of TUs the link can hold at once: `floor(capacity * process_time / 60)`, at least one.
    pub fn concurrent_tus(&self) -> u32 {
        let raw = (self.capacity * self.process_time / 60.0).floor();
        if raw.is_finite() && raw >= 1.0 {
            raw as u32
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationalState {
    Operational,
    Fault,
    Removed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleStatus {
    pub operational_state: OperationalState,
    pub workload: f64,
}

impl Default for ModuleStatus {
    fn default() -> Self {
        ModuleStatus { operational_state: OperationalState::Operational, workload: 0.0 }
    }
}

impl ModuleStatus {
    pub fn is_operational(&self) -> bool {
        self.operational_state == OperationalState::Operational
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleDescriptor {
    pub module_id: ModuleId,
    pub module_kind: ModuleKind,
    pub abilities: Vec<Ability>,
    pub footprint: Footprint,
    pub interfaces: Vec<PhysicalInterface>,
    pub internal_links: Vec<InternalLink>,
    pub transfer_cost: f64,
    pub status: ModuleStatus,
}

impl ModuleDescriptor {
    pub fn interface(&self, id: &InterfaceId) -> Option<&PhysicalInterface> {
        self.interfaces.iter().find(|i| &i.interface_id == id)
    }

    pub fn has_ability(&self, kind: AbilityKind) -> bool {
        self.abilities.iter().any(|a| a.kind == kind)
    }

    /// Copy of this descriptor under another module id (descriptor files describe module types).
    pub fn instantiate(&self, module_id: ModuleId) -> ModuleDescriptor {
        ModuleDescriptor { module_id, ..self.clone() }
    }

    /// Concurrent-TU capacity summed over all internal links.
    pub fn concurrent_tus(&self) -> u32 {
        self.internal_links.iter().map(InternalLink::concurrent_tus).sum::<u32>().max(1)
    }
}

/// One invariant violation, addressed by a field path such as `internal_links[0].capacity`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), reason: reason.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("descriptor parse error at line {line}, column {column}: {message}")]
    Parse { message: String, line: usize, column: usize },
    #[error("unsupported descriptor schema_version {0} (expected {DESCRIPTOR_SCHEMA_VERSION})")]
    UnsupportedSchema(u32),
    #[error("descriptor `{module_id}` is invalid: {report}")]
    Invalid { module_id: ModuleId, report: ValidationReport },
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        ModelError::Parse { message: e.to_string(), line: e.line(), column: e.column() }
    }
}

fn normalize_deg(deg: f64) -> f64 {
    deg.rem_euclid(360.0)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (normalize_deg(a) - normalize_deg(b)).abs();
    d.min(360.0 - d)
}

/// Checks every descriptor invariant and returns all violations found.
pub fn validate_descriptor(d: &ModuleDescriptor) -> ValidationReport {
    let mut report = ValidationReport::default();

    if d.module_id.as_str().trim().is_empty() {
        report.push("module_id", "module_id must be nonempty");
    }

    let Footprint { width, length } = d.footprint;
    let footprint_ok = width.is_finite() && length.is_finite() && width > 0.0 && length > 0.0;
    if !(width.is_finite() && width > 0.0) {
        report.push("footprint.width", "width must be > 0");
    }
    if !(length.is_finite() && length > 0.0) {
        report.push("footprint.length", "length must be > 0");
    }

    if !(d.transfer_cost.is_finite() && d.transfer_cost >= 0.0) {
        report.push("transfer_cost", "transfer_cost must be >= 0");
    }

    if d.module_kind == ModuleKind::Transport && !d.has_ability(AbilityKind::Transport) {
        report.push("abilities", "transport module needs a `transport` ability");
    }

    if d.interfaces.is_empty() {
        report.push("interfaces", "at least one interface is required");
    }
    let mut seen = BTreeSet::new();
    for (i, iface) in d.interfaces.iter().enumerate() {
        let path = format!("interfaces[{i}]");
        if iface.interface_id.as_str().is_empty() {
            report.push(format!("{path}.interface_id"), "interface_id must be nonempty");
        } else if !seen.insert(&iface.interface_id) {
            report.push(format!("{path}.interface_id"), format!("duplicate interface id `{}`", iface.interface_id));
        }
        if !(0.0..360.0).contains(&iface.heading) {
            report.push(format!("{path}.heading"), "heading must be in [0, 360)");
        }
        if footprint_ok {
            check_interface_geometry(&mut report, &path, iface, width, length);
        }
    }

    for (i, link) in d.internal_links.iter().enumerate() {
        let path = format!("internal_links[{i}]");
        for (field, id) in [("from_interface", &link.from_interface), ("to_interface", &link.to_interface)] {
            if d.interface(id).is_none() {
                report.push(format!("{path}.{field}"), format!("unknown interface `{id}`"));
            }
        }
        if link.from_interface == link.to_interface {
            report.push(path.clone(), "link must join two distinct interfaces");
        }
        if !(link.process_time.is_finite() && link.process_time > 0.0) {
            report.push(format!("{path}.process_time"), "process_time must be > 0");
        }
        if !(link.capacity.is_finite() && link.capacity > 0.0) {
            report.push(format!("{path}.capacity"), "capacity must be > 0");
        }
    }

    let status = d.status;
    if !(0.0..=1.0).contains(&status.workload) {
        report.push("status.workload", "workload must be in [0, 1]");
    } else if status.operational_state == OperationalState::Removed && status.workload > 0.0 {
        report.push("status.workload", "removed module cannot carry workload");
    }

    report
}

fn check_interface_geometry(
    report: &mut ValidationReport,
    path: &str,
    iface: &PhysicalInterface,
    width: f64,
    length: f64,
) {
    let (x, y) = iface.local_position;
    let within_x = (-BOUNDARY_EPS_MM..=width + BOUNDARY_EPS_MM).contains(&x);
    let within_y = (-BOUNDARY_EPS_MM..=length + BOUNDARY_EPS_MM).contains(&y);
    // Outward normals of the edges the point lies on.
    let mut normals = Vec::new();
    if within_y && x.abs() <= BOUNDARY_EPS_MM {
        normals.push(180.0);
    }
    if within_y && (x - width).abs() <= BOUNDARY_EPS_MM {
        normals.push(0.0);
    }
    if within_x && y.abs() <= BOUNDARY_EPS_MM {
        normals.push(270.0);
    }
    if within_x && (y - length).abs() <= BOUNDARY_EPS_MM {
        normals.push(90.0);
    }
    if normals.is_empty() {
        report.push(format!("{path}.local_position"), "interface must lie on the footprint boundary");
    } else if !normals.iter().any(|n| angle_diff(*n, iface.heading) <= HEADING_TOLERANCE_DEG) {
        report.push(format!("{path}.heading"), "heading must be normal to its footprint edge");
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptorDocument {
    schema_version: u32,
    module_id: ModuleId,
    module_kind: ModuleKind,
    abilities: Vec<Ability>,
    footprint: Footprint,
    interfaces: Vec<PhysicalInterface>,
    internal_links: Vec<InternalLink>,
    #[serde(default)]
    transfer_cost: f64,
    #[serde(default)]
    status: ModuleStatus,
}

#[derive(Serialize)]
struct DescriptorDocumentRef<'a> {
    schema_version: u32,
    #[serde(flatten)]
    descriptor: &'a ModuleDescriptor,
}

/// Parses a descriptor document and validates it.
pub fn load_descriptor(text: &str) -> Result<ModuleDescriptor, ModelError> {
    let doc: DescriptorDocument = serde_json::from_str(text)?;
    if doc.schema_version != DESCRIPTOR_SCHEMA_VERSION {
        return Err(ModelError::UnsupportedSchema(doc.schema_version));
    }
    let descriptor = ModuleDescriptor {
        module_id: doc.module_id,
        module_kind: doc.module_kind,
        abilities: doc.abilities,
        footprint: doc.footprint,
        interfaces: doc.interfaces,
        internal_links: doc.internal_links,
        transfer_cost: doc.transfer_cost,
        status: doc.status,
    };
    let report = validate_descriptor(&descriptor);
    if !report.is_valid() {
        return Err(ModelError::Invalid { module_id: descriptor.module_id, report });
    }
    Ok(descriptor)
}

/// Serializes a descriptor into the versioned document format.
pub fn save_descriptor(descriptor: &ModuleDescriptor) -> String {
    let doc = DescriptorDocumentRef { schema_version: DESCRIPTOR_SCHEMA_VERSION, descriptor };
    serde_json::to_string_pretty(&doc).expect("descriptor serialization is infallible")
}
