//! Agent-based control and discrete-event simulation for modular automated
//! material flow systems.
//!
//! Every module (conveyor, junction, portal crane) is driven by an agent that
//! knows only its own descriptor and its neighbours. A replicated coordinator
//! merges the local views into a topology, negotiates capacity-reserved
//! semi-static routes for each material flow relation, and books every TU
//! firmly along its route before it moves.

pub mod agent;
pub mod hmi;
pub mod ids;
pub mod model;
pub mod routing;
pub mod sim;
pub mod time;
pub mod topology;

pub use ids::{InterfaceId, ModuleId, RelationId, RouteId, TuId};
pub use time::SimTime;
