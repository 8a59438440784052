use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agent::CoordinatorError;
use crate::hmi::snapshot::{take_snapshot, Delta, LayoutSnapshot};
use crate::ids::{ModuleId, RouteId};
use crate::model::ModuleDescriptor;
use crate::routing::{OverrideViolation, RoutingError};
use crate::sim::{ScenarioConfig, SimError, Simulation, Strategy};
use crate::time::SimTime;
use crate::topology::{apply_layout_change, GeometricTolerance, LayoutChange, Placement, Rotation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorCommand {
    OverrideRoute {
        route_id: RouteId,
        forced_path: Vec<ModuleId>,
    },
    AddModule {
        module_id: ModuleId,
        descriptor_ref: String,
        x: f64,
        y: f64,
        #[serde(default)]
        rotation: Rotation,
    },
    RemoveModule {
        module_id: ModuleId,
    },
    SetStrategy {
        strategy: Strategy,
    },
    Pause,
    Resume,
    /// Advances the clock by `ms` of simulated time, paused or not.
    Step {
        ms: u64,
    },
    /// Simulated seconds per wall-clock second.
    SetRate {
        rate: f64,
    },
}

/// Which rule a rejected command broke.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    DisconnectedPath,
    CapacityViolation,
    UnknownEntity,
    ModuleOccupied,
    LayoutConflict,
    CoordinatorUnavailable,
    InvalidCommand,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::DisconnectedPath => "disconnected path",
            Constraint::CapacityViolation => "capacity violation",
            Constraint::UnknownEntity => "unknown entity",
            Constraint::ModuleOccupied => "module occupied",
            Constraint::LayoutConflict => "layout conflict",
            Constraint::CoordinatorUnavailable => "coordinator unavailable",
            Constraint::InvalidCommand => "invalid command",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub constraint: Constraint,
    pub detail: String,
}

impl Rejection {
    fn new(constraint: Constraint, detail: impl fmt::Display) -> Self {
        Rejection { constraint, detail: detail.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub command_id: String,
    pub accepted: bool,
    /// Topology revision after the command was applied (or left alone).
    pub revision: u64,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<Rejection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clock {
    pub paused: bool,
    pub rate: f64,
}

fn routing_rejection(e: &RoutingError) -> Rejection {
    let constraint = match e {
        RoutingError::OverrideRejected(v) => match v {
            OverrideViolation::CapacityExceeded { .. } => Constraint::CapacityViolation,
            OverrideViolation::UnknownModule { .. } => Constraint::UnknownEntity,
            _ => Constraint::DisconnectedPath,
        },
        RoutingError::UnknownRoute(_) | RoutingError::UnknownRelation(_) => Constraint::UnknownEntity,
        RoutingError::SourceAbsent(_) | RoutingError::SinkAbsent(_) => Constraint::UnknownEntity,
        RoutingError::NoCapacityPath(_) => Constraint::CapacityViolation,
        _ => Constraint::InvalidCommand,
    };
    Rejection::new(constraint, e)
}

fn sim_rejection(e: &SimError) -> Rejection {
    match e {
        SimError::UnknownModule(_) | SimError::UnknownRelation(_) => Rejection::new(Constraint::UnknownEntity, e),
        SimError::Coordinator(CoordinatorError::ModuleOccupied(m)) => {
            Rejection::new(Constraint::ModuleOccupied, format!("module occupied: `{m}` carries or has booked a TU"))
        }
        SimError::Coordinator(_) => Rejection::new(Constraint::CoordinatorUnavailable, e),
        SimError::Routing(r) => routing_rejection(r),
        SimError::DuplicateModule(_) | SimError::Layout(_) => Rejection::new(Constraint::LayoutConflict, e),
        SimError::Scenario(_) => Rejection::new(Constraint::InvalidCommand, e),
    }
}

/// Owns a running simulation and turns its state into snapshots and deltas.
///
/// Every mutation goes through `&mut self`, so commands are applied in one
/// total order, and each mutation returns the delta it caused.
pub struct Gateway {
    sim: Simulation,
    catalog: BTreeMap<String, ModuleDescriptor>,
    tolerance: GeometricTolerance,
    clock: Clock,
    last: LayoutSnapshot,
}

impl Gateway {
    pub fn new(config: &ScenarioConfig, paused: bool, rate: f64) -> Result<Self, SimError> {
        let sim = Simulation::new(config)?;
        let last = take_snapshot(&sim, 0);
        let rate = if rate.is_finite() && rate > 0.0 { rate } else { 1.0 };
        Ok(Gateway {
            sim,
            catalog: config.catalog.clone(),
            tolerance: config.settings.tolerance,
            clock: Clock { paused, rate },
            last,
        })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Latest published snapshot; always matches the end of the delta stream.
    pub fn snapshot(&self) -> &LayoutSnapshot {
        &self.last
    }

    fn publish(&mut self) -> Option<Delta> {
        let next = take_snapshot(&self.sim, self.last.seq + 1);
        let delta = Delta::between(&self.last, &next)?;
        self.last = next;
        Some(delta)
    }

    fn advance_to(&mut self, target: SimTime) -> Option<Delta> {
        self.sim.step_until(target);
        self.publish()
    }

    /// Moves simulated time forward by `wall` scaled by the rate. Does nothing while paused.
    pub fn tick(&mut self, wall: Duration) -> Option<Delta> {
        if self.clock.paused {
            return None;
        }
        let now = self.sim.now();
        let target = now + (wall.as_secs_f64() * self.clock.rate * 1000.0).round() as u64;
        // Past the horizon the clock only runs while events remain.
        let cap = self.sim.horizon().max(self.sim.next_event_time().unwrap_or(now)).max(now);
        self.advance_to(target.min(cap))
    }

    /// Validates and applies one command. Exactly one ack per call; rejected commands change nothing.
    pub fn apply(&mut self, command_id: &str, command: &OperatorCommand) -> (Ack, Option<Delta>) {
        let outcome = self.execute(command);
        let (accepted, rejection, detail) = match outcome {
            Ok(detail) => (true, None, detail),
            Err(r) => {
                let d = format!("{}: {}", r.constraint, r.detail);
                (false, Some(r), d)
            }
        };
        self.sim.note_operator_command(command_id, accepted, &detail);
        let delta = self.publish();
        let ack = Ack {
            command_id: command_id.to_owned(),
            accepted,
            revision: self.sim.topology().revision(),
            seq: self.last.seq,
            rejection,
        };
        (ack, delta)
    }

    fn require_coordinator(&self) -> Result<(), Rejection> {
        if self.sim.coordinator().is_active() {
            Ok(())
        } else {
            Err(Rejection::new(Constraint::CoordinatorUnavailable, "no active coordinator; retry after failover"))
        }
    }

    fn execute(&mut self, command: &OperatorCommand) -> Result<String, Rejection> {
        match command {
            OperatorCommand::OverrideRoute { route_id, forced_path } => {
                self.require_coordinator()?;
                if !self.sim.routes().route(route_id).is_some_and(|r| r.is_active()) {
                    return Err(Rejection::new(Constraint::UnknownEntity, format!("unknown route `{route_id}`")));
                }
                let installed =
                    self.sim.override_route(route_id, forced_path.clone()).map_err(|e| routing_rejection(&e))?;
                Ok(format!("route `{route_id}` replaced by `{installed}`"))
            }
            OperatorCommand::AddModule { module_id, descriptor_ref, x, y, rotation } => {
                self.require_coordinator()?;
                let template = self.catalog.get(descriptor_ref).ok_or_else(|| {
                    Rejection::new(Constraint::UnknownEntity, format!("unknown descriptor `{descriptor_ref}`"))
                })?;
                if self.sim.agents().contains_key(module_id) || self.sim.topology().contains(module_id) {
                    return Err(Rejection::new(
                        Constraint::LayoutConflict,
                        format!("module `{module_id}` already exists"),
                    ));
                }
                let descriptor = template.instantiate(module_id.clone());
                let placement = Placement::new(module_id.clone(), *x, *y, *rotation);
                // Dry run so a bad placement is refused here rather than later in registration.
                apply_layout_change(
                    self.sim.topology(),
                    LayoutChange::Added { descriptor: descriptor.clone(), placement: placement.clone() },
                    &self.tolerance,
                )
                .map_err(|e| Rejection::new(Constraint::LayoutConflict, e))?;
                self.sim.add_module(descriptor, placement, descriptor_ref.clone()).map_err(|e| sim_rejection(&e))?;
                Ok(format!("module `{module_id}` joining"))
            }
            OperatorCommand::RemoveModule { module_id } => {
                self.require_coordinator()?;
                self.sim.remove_module(module_id).map_err(|e| sim_rejection(&e))?;
                Ok(format!("module `{module_id}` leaving"))
            }
            OperatorCommand::SetStrategy { strategy } => {
                self.sim.set_strategy(*strategy);
                Ok(format!("strategy {strategy}"))
            }
            OperatorCommand::Pause => {
                self.clock.paused = true;
                Ok("paused".into())
            }
            OperatorCommand::Resume => {
                self.clock.paused = false;
                Ok("resumed".into())
            }
            OperatorCommand::Step { ms } => {
                let target = self.sim.now() + *ms;
                self.sim.step_until(target);
                Ok(format!("stepped to {}", self.sim.now()))
            }
            OperatorCommand::SetRate { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Rejection::new(Constraint::InvalidCommand, "rate must be a positive number"));
                }
                self.clock.rate = *rate;
                Ok(format!("rate {rate}"))
            }
        }
    }
}
