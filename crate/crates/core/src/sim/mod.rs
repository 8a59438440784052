//! Discrete-event simulation of a module system under a routing strategy.

mod arrivals;
pub mod batch;
pub mod checks;
mod effort;
mod engine;
mod metrics;
mod scenario;

pub use arrivals::{generate_arrivals, ArrivalStream};
pub use effort::{effort_model, Breakeven, EffortError, EffortModel, EffortResult};
pub use engine::{
    plan_routes, run_scenario, Failover, PlannedRoute, RoutePlan, RouteStats, RunOutput, RunSummary, SimError,
    Simulation, TransportUnit, TuState, UnroutedRelation,
};
pub use metrics::{compute_metrics, MetricsAccumulator, MetricsError, MetricsReport, ModuleMetrics, RelationMetrics};
pub use scenario::{
    load_scenario, resolve_scenario, ModuleSetup, ReconfigEvent, ScenarioConfig, ScenarioError, ScenarioFile,
    ScriptEntry, ScriptEventFile, ScriptedEvent, Settings, Strategy, SCENARIO_SCHEMA_VERSION,
};
