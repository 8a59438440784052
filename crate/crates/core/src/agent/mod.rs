//! Module agents, the coordinator role and their message ontology.
//!
//! Each agent splits its work into four logic levels: material flow (route
//! and reservation decisions), functional (operation sequences per TU),
//! system (actuators) and configuration (registration and liveness). A lower
//! level only acts on what a higher level already decided.

#[allow(clippy::module_inception)]
mod agent;
mod coordinator;
mod log;
mod message;

pub use agent::{
    handover, ActuatorState, AgentState, ConfigurationLevel, FunctionalLevel, HandoverError, LevelEffect,
    MaterialFlowLevel, OperationSequence, OperationStep, ProtocolError, RegistrationPhase, SystemLevel,
};
pub use coordinator::{elect_coordinator, CoordinatorError, CoordinatorState, Registry, RegistryEntry, RESERVED_IDS};
pub use log::{EventLog, LinkInfo, LogEntry, LogError, LogRecord};
pub use message::{AgentMessage, Category, Party, Payload, Performative};
