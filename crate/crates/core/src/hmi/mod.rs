//! Operator-facing view of a running simulation and the wire protocol that serves it.

pub mod codec;
mod gateway;
mod server;
mod snapshot;

pub use gateway::{Ack, Clock, Constraint, Gateway, OperatorCommand, Rejection};
pub use server::Server;
pub use snapshot::{take_snapshot, ActuatorView, Delta, GapError, LayoutSnapshot, ModuleView, OrderView, RouteView};
