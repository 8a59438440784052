use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ModuleId, RelationId};
use crate::model::{load_descriptor, ModelError, ModuleDescriptor};
use crate::routing::MaterialFlowRelation;
use crate::time::{secs_to_millis, SimTime};
use crate::topology::{GeometricTolerance, LayoutFile, Placement, Rotation};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Negotiated semi-static routes with reserved capacity.
    #[default]
    Ssr,
    /// Per-TU choice of the least occupied branch at release.
    BaselineOccupancy,
    /// Fixed shortest path, no capacity reservation.
    StaticFixed,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ssr, Strategy::BaselineOccupancy, Strategy::StaticFixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Ssr => "ssr",
            Strategy::BaselineOccupancy => "baseline_occupancy",
            Strategy::StaticFixed => "static_fixed",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected ssr, baseline_occupancy or static_fixed)"))
    }
}

/// Timing and tolerance knobs of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub planning_latency_ms: u64,
    pub heartbeat_ms: u64,
    /// Consecutive missing coordinator heartbeats after which it is presumed dead.
    pub missed_heartbeats: u32,
    pub tolerance: GeometricTolerance,
    /// Seconds past release within which a TU must find a slot.
    pub scheduling_horizon: f64,
    /// Probability that a single status report is lost.
    pub status_loss_rate: f64,
    pub reclaim_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            planning_latency_ms: 50,
            heartbeat_ms: 1000,
            missed_heartbeats: 3,
            tolerance: GeometricTolerance::default(),
            scheduling_horizon: 3600.0,
            status_loss_rate: 0.0,
            reclaim_fraction: 0.5,
        }
    }
}

/// A scripted reconfiguration as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScriptEventFile {
    AddModule {
        module_id: ModuleId,
        descriptor: String,
        x: f64,
        y: f64,
        #[serde(default = "rot0")]
        rotation: Rotation,
    },
    RemoveModule {
        module_id: ModuleId,
    },
    KillCoordinator,
    DemandChange {
        relation_id: RelationId,
        required_throughput: f64,
    },
}

fn rot0() -> Rotation {
    Rotation::R0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Seconds after start.
    pub at: f64,
    #[serde(flatten)]
    pub event: ScriptEventFile,
}

/// The on-disk scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    /// Layout file path, relative to the scenario file.
    pub layout: String,
    #[serde(default)]
    pub relations: Vec<MaterialFlowRelation>,
    /// Seconds.
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub routing_strategy: Strategy,
    #[serde(default)]
    pub reconfiguration_script: Vec<ScriptEntry>,
    #[serde(default)]
    pub settings: Settings,
}

/// One module present at start-up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleSetup {
    pub descriptor: ModuleDescriptor,
    pub placement: Placement,
    pub descriptor_ref: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ReconfigEvent {
    AddModule { setup: ModuleSetup },
    RemoveModule { module_id: ModuleId },
    KillCoordinator,
    DemandChange { relation_id: RelationId, required_throughput: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    pub at: SimTime,
    pub event: ReconfigEvent,
}

/// A fully resolved scenario, ready to simulate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub modules: Vec<ModuleSetup>,
    pub relations: Vec<MaterialFlowRelation>,
    pub horizon_ms: u64,
    pub seed: u64,
    pub strategy: Strategy,
    pub script: Vec<ScriptedEvent>,
    pub settings: Settings,
    /// Descriptor documents by reference, for modules added at runtime.
    pub catalog: BTreeMap<String, ModuleDescriptor>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {source}")]
    Descriptor { path: PathBuf, source: ModelError },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid { field: field.into(), reason: reason.into() }
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_owned(), source })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        path: path.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Loads descriptor documents relative to `base`, caching by reference.
struct DescriptorLoader {
    base: PathBuf,
    catalog: BTreeMap<String, ModuleDescriptor>,
}

impl DescriptorLoader {
    fn get(&mut self, reference: &str) -> Result<ModuleDescriptor, ScenarioError> {
        if let Some(d) = self.catalog.get(reference) {
            return Ok(d.clone());
        }
        let path = self.base.join(reference);
        let d = load_descriptor(&read(&path)?).map_err(|source| ScenarioError::Descriptor { path, source })?;
        self.catalog.insert(reference.to_owned(), d.clone());
        Ok(d)
    }
}

/// Reads a scenario file together with its layout and descriptor files.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let file: ScenarioFile = parse(path, &read(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_scenario(file, base)
}

/// Resolves file references of a parsed scenario against `base`.
pub fn resolve_scenario(file: ScenarioFile, base: &Path) -> Result<ScenarioConfig, ScenarioError> {
    if file.schema_version != SCENARIO_SCHEMA_VERSION {
        return Err(ScenarioError::invalid("schema_version", format!("unsupported version {}", file.schema_version)));
    }
    let layout_path = base.join(&file.layout);
    let layout: LayoutFile = parse(&layout_path, &read(&layout_path)?)?;
    if layout.schema_version != SCENARIO_SCHEMA_VERSION {
        return Err(ScenarioError::invalid(
            "layout.schema_version",
            format!("unsupported version {}", layout.schema_version),
        ));
    }
    let layout_base = layout_path.parent().unwrap_or(Path::new(".")).to_owned();
    let mut loader = DescriptorLoader { base: layout_base, catalog: BTreeMap::new() };
    let mut modules = Vec::new();
    for entry in &layout.placements {
        let d = loader.get(&entry.descriptor)?;
        modules.push(ModuleSetup {
            descriptor: d.instantiate(entry.module_id.clone()),
            placement: entry.placement(),
            descriptor_ref: entry.descriptor.clone(),
        });
    }
    // Script descriptors resolve relative to the scenario file.
    let layout_catalog = std::mem::take(&mut loader.catalog);
    let mut script_loader = DescriptorLoader { base: base.to_owned(), catalog: BTreeMap::new() };
    let mut script = Vec::new();
    for (i, s) in file.reconfiguration_script.iter().enumerate() {
        let event = match &s.event {
            ScriptEventFile::AddModule { module_id, descriptor, x, y, rotation } => {
                let d = script_loader.get(descriptor)?;
                ReconfigEvent::AddModule {
                    setup: ModuleSetup {
                        descriptor: d.instantiate(module_id.clone()),
                        placement: Placement::new(module_id.clone(), *x, *y, *rotation),
                        descriptor_ref: descriptor.clone(),
                    },
                }
            }
            ScriptEventFile::RemoveModule { module_id } => ReconfigEvent::RemoveModule { module_id: module_id.clone() },
            ScriptEventFile::KillCoordinator => ReconfigEvent::KillCoordinator,
            ScriptEventFile::DemandChange { relation_id, required_throughput } => ReconfigEvent::DemandChange {
                relation_id: relation_id.clone(),
                required_throughput: *required_throughput,
            },
        };
        if !(s.at.is_finite() && s.at >= 0.0) {
            return Err(ScenarioError::invalid(format!("reconfiguration_script[{i}].at"), "must be >= 0"));
        }
        script.push(ScriptedEvent { at: SimTime::from_secs(s.at), event });
    }
    let mut catalog = layout_catalog;
    catalog.extend(script_loader.catalog);
    let config = ScenarioConfig {
        name: file.name,
        modules,
        relations: file.relations,
        horizon_ms: secs_to_millis(file.horizon),
        seed: file.seed,
        strategy: file.routing_strategy,
        script,
        settings: file.settings,
        catalog,
    };
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    /// A scenario without script events.
    pub fn new(
        name: impl Into<String>,
        modules: Vec<(ModuleDescriptor, Placement)>,
        relations: Vec<MaterialFlowRelation>,
        horizon_secs: f64,
    ) -> Self {
        ScenarioConfig {
            name: name.into(),
            modules: modules
                .into_iter()
                .map(|(descriptor, placement)| ModuleSetup {
                    descriptor_ref: descriptor.module_id.to_string(),
                    descriptor,
                    placement,
                })
                .collect(),
            relations,
            horizon_ms: secs_to_millis(horizon_secs),
            seed: 0,
            strategy: Strategy::Ssr,
            script: Vec::new(),
            settings: Settings::default(),
            catalog: BTreeMap::new(),
        }
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_millis(self.horizon_ms)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.horizon_ms == 0 {
            return Err(ScenarioError::invalid("horizon", "must be > 0"));
        }
        let s = &self.settings;
        if s.heartbeat_ms == 0 || s.missed_heartbeats == 0 {
            return Err(ScenarioError::invalid(
                "settings.heartbeat_ms",
                "heartbeat period and missed count must be > 0",
            ));
        }
        if !(0.0..=1.0).contains(&s.status_loss_rate) {
            return Err(ScenarioError::invalid("settings.status_loss_rate", "must lie in [0, 1]"));
        }
        if s.scheduling_horizon.is_nan() || s.scheduling_horizon <= 0.0 {
            return Err(ScenarioError::invalid("settings.scheduling_horizon", "must be > 0"));
        }
        let mut known: BTreeSet<ModuleId> = BTreeSet::new();
        for (i, m) in self.modules.iter().enumerate() {
            if m.descriptor.module_id != m.placement.module_id {
                return Err(ScenarioError::invalid(format!("modules[{i}]"), "descriptor and placement ids differ"));
            }
            let report = crate::model::validate_descriptor(&m.descriptor);
            if !report.is_valid() {
                return Err(ScenarioError::invalid(
                    format!("modules[{i}] ({})", m.placement.module_id),
                    report.to_string(),
                ));
            }
            if !known.insert(m.placement.module_id.clone()) {
                return Err(ScenarioError::invalid(
                    format!("modules[{i}]"),
                    format!("duplicate module `{}`", m.placement.module_id),
                ));
            }
        }
        for (i, e) in self.script.iter().enumerate() {
            if e.at.as_millis() > self.horizon_ms {
                return Err(ScenarioError::invalid(
                    format!("reconfiguration_script[{i}].at"),
                    "event lies beyond the horizon",
                ));
            }
            if let ReconfigEvent::AddModule { setup } = &e.event {
                known.insert(setup.placement.module_id.clone());
            }
        }
        let mut relation_ids = BTreeSet::new();
        for (i, r) in self.relations.iter().enumerate() {
            let field = format!("relations[{i}]");
            if !relation_ids.insert(r.relation_id.clone()) {
                return Err(ScenarioError::invalid(field, format!("duplicate relation `{}`", r.relation_id)));
            }
            if !(r.required_throughput.is_finite() && r.required_throughput > 0.0) {
                return Err(ScenarioError::invalid(format!("{field}.required_throughput"), "must be > 0"));
            }
            if !(r.variability.is_finite() && r.variability >= 0.0) {
                return Err(ScenarioError::invalid(format!("{field}.variability"), "must be >= 0"));
            }
            for (name, m) in [("source", &r.source), ("sink", &r.sink)] {
                if !known.contains(m) {
                    return Err(ScenarioError::invalid(format!("{field}.{name}"), format!("unknown module `{m}`")));
                }
            }
        }
        for (i, e) in self.script.iter().enumerate() {
            let field = format!("reconfiguration_script[{i}]");
            match &e.event {
                ReconfigEvent::DemandChange { relation_id, required_throughput } => {
                    if !relation_ids.contains(relation_id) {
                        return Err(ScenarioError::invalid(field, format!("unknown relation `{relation_id}`")));
                    }
                    if !(required_throughput.is_finite() && *required_throughput > 0.0) {
                        return Err(ScenarioError::invalid(field, "required_throughput must be > 0"));
                    }
                }
                ReconfigEvent::RemoveModule { module_id } if !known.contains(module_id) => {
                    return Err(ScenarioError::invalid(field, format!("unknown module `{module_id}`")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
