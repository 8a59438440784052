use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::message::{AgentMessage, Party, Payload, Performative};
use crate::ids::{ModuleId, RouteId, TuId};
use crate::model::{AbilityKind, ModuleDescriptor, ModuleKind, ParamValue};
use crate::routing::{Reservation, ReservationTable, RouteSegment, Slot};
use crate::time::SimTime;
use crate::topology::{Endpoint, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("message {0} is not addressed to `{1}`")]
    NotAddressed(u64, ModuleId),
    #[error("message {0} travels in the wrong category for its payload")]
    CategoryMismatch(u64),
    #[error("`{module}` cannot handle {performative:?} {kind}")]
    Unroutable { module: ModuleId, performative: Performative, kind: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandoverError {
    #[error("no reservation of `{to}` covers {tu} now; the TU waits")]
    MissingReservation { tu: TuId, to: ModuleId },
    #[error("`{from}` does not hold {tu}")]
    NotHeld { tu: TuId, from: ModuleId },
    #[error("no physical connection from `{from}` to `{to}`")]
    NotConnected { from: ModuleId, to: ModuleId },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationPhase {
    Unregistered,
    Registering,
    Registered,
    Deregistering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationStep {
    pub actuator_id: String,
    pub action: String,
    pub parameters: BTreeMap<String, ParamValue>,
    /// Seconds.
    pub expected_duration: f64,
}

/// What the functional level plans for one TU inside this module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationSequence {
    pub tu_id: TuId,
    pub steps: Vec<OperationStep>,
}

impl OperationSequence {
    pub fn is_valid(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.expected_duration > 0.0)
    }

    pub fn actuators(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.actuator_id.as_str())
    }
}

/// Route selection: known route segments and the module's own firm bookings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaterialFlowLevel {
    pub segments: BTreeMap<RouteId, RouteSegment>,
    pub bookings: ReservationTable,
    pub slots: BTreeMap<TuId, Slot>,
}

/// Transport planning inside the module.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionalLevel {
    pub sequences: BTreeMap<TuId, OperationSequence>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorState {
    /// `entry->exit` of the traversal being driven, when running.
    pub direction: Option<String>,
    pub tus: Vec<TuId>,
}

impl ActuatorState {
    pub fn is_running(&self) -> bool {
        !self.tus.is_empty()
    }
}

/// Hardware IO.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemLevel {
    pub actuators: BTreeMap<String, ActuatorState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationLevel {
    pub phase: RegistrationPhase,
    pub topology_revision: u64,
    /// Send time of the newest coordinator heartbeat received.
    pub coordinator_beat: Option<SimTime>,
}

/// Side effects of level transitions, reported so they can be logged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum LevelEffect {
    SequenceQueued { tu_id: TuId, sequence: OperationSequence },
    SequenceDone { tu_id: TuId },
    ActuatorOn { actuator_id: String, tu_id: TuId, direction: String },
    ActuatorOff { actuator_id: String, tu_id: TuId },
}

/// One module agent and its four logic levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub module_id: ModuleId,
    pub descriptor: ModuleDescriptor,
    pub material_flow: MaterialFlowLevel,
    pub functional: FunctionalLevel,
    pub system: SystemLevel,
    pub configuration: ConfigurationLevel,
    /// TUs physically on the module.
    pub holding: BTreeMap<TuId, Slot>,
    pub inbox: VecDeque<AgentMessage>,
    effects: Vec<LevelEffect>,
}

impl AgentState {
    pub fn new(descriptor: ModuleDescriptor) -> Self {
        let module_id = descriptor.module_id.clone();
        AgentState {
            material_flow: MaterialFlowLevel {
                bookings: ReservationTable::new(module_id.clone()),
                ..Default::default()
            },
            module_id,
            descriptor,
            functional: FunctionalLevel::default(),
            system: SystemLevel::default(),
            configuration: ConfigurationLevel {
                phase: RegistrationPhase::Unregistered,
                topology_revision: 0,
                coordinator_beat: None,
            },
            holding: BTreeMap::new(),
            inbox: VecDeque::new(),
            effects: Vec::new(),
        }
    }

    pub fn party(&self) -> Party {
        Party::Module(self.module_id.clone())
    }

    pub fn take_effects(&mut self) -> Vec<LevelEffect> {
        std::mem::take(&mut self.effects)
    }

    pub fn running_actuators(&self) -> impl Iterator<Item = (&String, &ActuatorState)> {
        self.system.actuators.iter().filter(|(_, a)| a.is_running())
    }

    /// Fraction of concurrent-TU capacity in use.
    pub fn workload(&self) -> f64 {
        (self.holding.len() as f64 / self.descriptor.concurrent_tus().max(1) as f64).min(1.0)
    }

    /// Starts registration; returns the request to send to the coordinator.
    pub fn request_registration(
        &mut self,
        message_id: u64,
        now: SimTime,
        placement: crate::topology::Placement,
    ) -> AgentMessage {
        self.configuration.phase = RegistrationPhase::Registering;
        AgentMessage::new(
            message_id,
            now,
            self.party(),
            Party::Coordinator,
            Performative::Request,
            format!("reg-{}", self.module_id),
            Payload::Registration { module_id: self.module_id.clone(), placement },
        )
    }

    /// Queues a message; [`process_inbox`](Self::process_inbox) drains it.
    pub fn enqueue(&mut self, message: AgentMessage) {
        self.inbox.push_back(message);
    }

    /// Handles queued messages, time-critical ones first, FIFO within a category.
    pub fn process_inbox(&mut self, now: SimTime, next_id: &mut u64) -> Vec<Result<Vec<AgentMessage>, ProtocolError>> {
        let mut pending: Vec<AgentMessage> = self.inbox.drain(..).collect();
        pending.sort_by_key(|m| m.category);
        pending.into_iter().map(|m| self.dispatch(&m, now, next_id)).collect()
    }

    /// Routes a message to the level owning its payload kind.
    pub fn dispatch(
        &mut self,
        msg: &AgentMessage,
        now: SimTime,
        next_id: &mut u64,
    ) -> Result<Vec<AgentMessage>, ProtocolError> {
        if !msg.is_for(&self.module_id) {
            return Err(ProtocolError::NotAddressed(msg.message_id, self.module_id.clone()));
        }
        if !msg.is_well_formed() {
            return Err(ProtocolError::CategoryMismatch(msg.message_id));
        }
        let unroutable = || ProtocolError::Unroutable {
            module: self.module_id.clone(),
            performative: msg.performative,
            kind: msg.payload.kind(),
        };
        let me = self.party();
        let mut reply = |performative: Performative, payload: Payload| {
            let id = *next_id;
            *next_id += 1;
            vec![msg.reply(id, now, me.clone(), performative, payload)]
        };
        match (&msg.payload, msg.performative) {
            // Configuration level.
            (Payload::Registration { .. }, Performative::Agree) => {
                self.configuration.phase = RegistrationPhase::Registered;
                Ok(vec![])
            }
            (Payload::Registration { .. }, Performative::Refuse | Performative::Failure) => {
                self.configuration.phase = RegistrationPhase::Unregistered;
                Ok(vec![])
            }
            (Payload::TopologyUpdate { revision, .. }, Performative::Inform) => {
                self.configuration.topology_revision = self.configuration.topology_revision.max(*revision);
                Ok(vec![])
            }
            (Payload::StatusReport { sent_at, .. }, Performative::Inform) => {
                if msg.sender == Party::Coordinator {
                    self.configuration.coordinator_beat =
                        Some(self.configuration.coordinator_beat.map_or(*sent_at, |t| t.max(*sent_at)));
                }
                Ok(vec![])
            }
            // Material flow level.
            (Payload::RouteProposal { route_id, segment, .. }, Performative::Inform) => {
                if segment.module_id != self.module_id {
                    return Ok(reply(Performative::Refuse, msg.payload.clone()));
                }
                self.material_flow.segments.insert(route_id.clone(), segment.clone());
                Ok(reply(Performative::Agree, msg.payload.clone()))
            }
            (Payload::ReservationRequest { tu_id, slot, reversible, concurrent_tus, .. }, Performative::Request) => {
                let probe = Reservation {
                    start: slot.start,
                    end: slot.end,
                    tu_id: *tu_id,
                    link: slot.link,
                    forward: slot.forward,
                };
                let ok = slot.module_id == self.module_id
                    && self.material_flow.bookings.conflict_with(&probe, *reversible, *concurrent_tus).is_none();
                if ok {
                    self.material_flow.bookings.insert(probe);
                    self.material_flow.slots.insert(*tu_id, slot.clone());
                    Ok(reply(Performative::Agree, msg.payload.clone()))
                } else {
                    Ok(reply(Performative::Refuse, msg.payload.clone()))
                }
            }
            // Functional level, driving the system level.
            (Payload::HandoverSync { tu_id, to, .. }, Performative::Request) if to == &self.module_id => {
                if self.can_take(*tu_id, now) {
                    self.take(*tu_id);
                    Ok(reply(Performative::Confirm, msg.payload.clone()))
                } else {
                    Ok(reply(Performative::Refuse, msg.payload.clone()))
                }
            }
            (Payload::HandoverSync { tu_id, from, .. }, Performative::Confirm) if from == &self.module_id => {
                self.release(*tu_id);
                Ok(vec![])
            }
            (Payload::HandoverSync { .. }, Performative::Refuse) => Ok(vec![]),
            _ => Err(unroutable()),
        }
    }

    /// A booking covers `now` and no opposing TU sits on the same reversible link.
    pub fn can_take(&self, tu: TuId, now: SimTime) -> bool {
        let Some(slot) = self.material_flow.slots.get(&tu) else {
            return false;
        };
        if !(slot.start <= now && now < slot.end) || self.holding.contains_key(&tu) {
            return false;
        }
        let reversible = self.descriptor.internal_links.get(slot.link).is_some_and(|l| l.reversible);
        // A TU whose slot ends now is leaving at this instant and no longer blocks the link.
        !(reversible && self.holding.values().any(|h| h.link == slot.link && h.forward != slot.forward && h.end > now))
    }

    fn take(&mut self, tu: TuId) {
        let slot = self.material_flow.slots[&tu].clone();
        let sequence = self.plan_sequence(tu, &slot);
        let direction = format!("{}->{}", slot.entry, slot.exit);
        self.effects.push(LevelEffect::SequenceQueued { tu_id: tu, sequence: sequence.clone() });
        for actuator in sequence.actuators().collect::<std::collections::BTreeSet<_>>() {
            let state = self.system.actuators.entry(actuator.to_owned()).or_default();
            state.direction = Some(direction.clone());
            state.tus.push(tu);
            self.effects.push(LevelEffect::ActuatorOn {
                actuator_id: actuator.to_owned(),
                tu_id: tu,
                direction: direction.clone(),
            });
        }
        self.functional.sequences.insert(tu, sequence);
        self.holding.insert(tu, slot);
    }

    /// Accepts a TU entering the system at this module (no upstream neighbour).
    pub fn admit(&mut self, tu: TuId, now: SimTime) -> Result<(), HandoverError> {
        if !self.can_take(tu, now) {
            return Err(HandoverError::MissingReservation { tu, to: self.module_id.clone() });
        }
        self.take(tu);
        Ok(())
    }

    /// Lets a TU leave: the system level stops, then the functional and material flow levels forget it.
    pub fn release(&mut self, tu: TuId) {
        if self.holding.remove(&tu).is_none() {
            return;
        }
        if let Some(seq) = self.functional.sequences.remove(&tu) {
            for actuator in seq.actuators().collect::<std::collections::BTreeSet<_>>() {
                if let Some(state) = self.system.actuators.get_mut(actuator) {
                    state.tus.retain(|t| *t != tu);
                    if state.tus.is_empty() {
                        state.direction = None;
                    }
                    self.effects.push(LevelEffect::ActuatorOff { actuator_id: actuator.to_owned(), tu_id: tu });
                }
            }
            self.effects.push(LevelEffect::SequenceDone { tu_id: tu });
        }
        self.material_flow.slots.remove(&tu);
        self.material_flow.bookings.remove_tu(tu);
    }

    fn plan_sequence(&self, tu: TuId, slot: &Slot) -> OperationSequence {
        let secs = (slot.end - slot.start) as f64 / 1000.0;
        let direction = ParamValue::Text(format!("{}->{}", slot.entry, slot.exit));
        let step = |actuator: String, action: &str, share: f64| OperationStep {
            actuator_id: actuator,
            action: action.to_owned(),
            parameters: BTreeMap::from([("direction".to_owned(), direction.clone())]),
            expected_duration: secs * share,
        };
        let drive = format!("drive-{}", slot.link);
        let steps = if self.descriptor.module_kind == ModuleKind::Manipulation
            && self.descriptor.has_ability(AbilityKind::Lift)
        {
            let lift = format!("lift-{}", slot.link);
            vec![step(lift.clone(), "pick", 0.25), step(drive, "move", 0.5), step(lift, "place", 0.25)]
        } else {
            vec![step(drive, "run", 1.0)]
        };
        OperationSequence { tu_id: tu, steps }
    }
}

/// Moves a TU across the boundary between two neighbouring modules within one instant.
///
/// Returns the receiver's traversal time in milliseconds and the exchanged messages.
pub fn handover(
    sender: &mut AgentState,
    receiver: &mut AgentState,
    tu: TuId,
    now: SimTime,
    topology: &Topology,
    next_id: &mut u64,
) -> Result<(u64, Vec<AgentMessage>), HandoverError> {
    let held = sender
        .holding
        .get(&tu)
        .cloned()
        .ok_or_else(|| HandoverError::NotHeld { tu, from: sender.module_id.clone() })?;
    let booked = receiver.material_flow.slots.get(&tu).cloned();
    let exit = Endpoint::new(sender.module_id.clone(), held.exit.clone());
    let connected = topology.connection_at(&exit).and_then(|c| c.exit_through(&exit)).is_some_and(|next| {
        next.module_id == receiver.module_id && booked.as_ref().is_none_or(|b| b.entry == next.interface_id)
    });
    if !connected {
        return Err(HandoverError::NotConnected { from: sender.module_id.clone(), to: receiver.module_id.clone() });
    }
    let request = AgentMessage::new(
        *next_id,
        now,
        sender.party(),
        receiver.party(),
        Performative::Request,
        format!("handover-{}-{}", tu.0, receiver.module_id),
        Payload::HandoverSync { tu_id: tu, from: sender.module_id.clone(), to: receiver.module_id.clone() },
    );
    *next_id += 1;
    let answer = receiver.dispatch(&request, now, next_id)?;
    let mut exchanged = vec![request];
    exchanged.extend(answer.iter().cloned());
    match answer.first() {
        Some(a) if a.performative == Performative::Confirm => {
            sender.dispatch(a, now, next_id)?;
            let slot = &receiver.holding[&tu];
            Ok((slot.end - slot.start, exchanged))
        }
        _ => Err(HandoverError::MissingReservation { tu, to: receiver.module_id.clone() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OperationalState;
    use crate::topology::fixtures::diamond;
    use crate::topology::GeometricTolerance;

    fn topo() -> Topology {
        Topology::from_placements(&diamond(), &GeometricTolerance::default()).unwrap()
    }

    fn agent(id: &str) -> AgentState {
        AgentState::new(topo().module(&id.into()).unwrap().descriptor.clone())
    }

    fn slot(module: &str, entry: &str, exit: &str, link: usize, forward: bool, start: u64, end: u64) -> Slot {
        Slot {
            module_id: module.into(),
            link,
            forward,
            entry: entry.into(),
            exit: exit.into(),
            start: SimTime::from_millis(start),
            end: SimTime::from_millis(end),
        }
    }

    fn reservation(id: u64, tu: u64, s: Slot) -> AgentMessage {
        AgentMessage::new(
            id,
            SimTime::ZERO,
            Party::Coordinator,
            Party::Module(s.module_id.clone()),
            Performative::Request,
            format!("res-{tu}"),
            Payload::ReservationRequest {
                tu_id: TuId(tu),
                relation_id: "r".into(),
                slot: s,
                reversible: true,
                concurrent_tus: 2,
            },
        )
    }

    #[test]
    fn feasible_reservation_is_agreed_and_opposing_one_refused() {
        let mut a = agent("upper");
        let mut ids = 100;
        let out = a
            .dispatch(&reservation(1, 1, slot("upper", "w", "e", 0, true, 0, 10_000)), SimTime::ZERO, &mut ids)
            .unwrap();
        assert_eq!(out[0].performative, Performative::Agree);
        assert_eq!(out[0].conversation_id, "res-1");
        let out = a
            .dispatch(&reservation(2, 2, slot("upper", "e", "w", 0, false, 5_000, 15_000)), SimTime::ZERO, &mut ids)
            .unwrap();
        assert_eq!(out[0].performative, Performative::Refuse);
    }

    #[test]
    fn handover_transfers_ownership_once() {
        let topo = topo();
        let (mut left, mut upper) = (agent("left"), agent("upper"));
        let mut ids = 0;
        left.dispatch(&reservation(1, 7, slot("left", "w", "n", 0, true, 0, 4_000)), SimTime::ZERO, &mut ids).unwrap();
        upper
            .dispatch(&reservation(2, 7, slot("upper", "w", "e", 0, true, 4_000, 14_000)), SimTime::ZERO, &mut ids)
            .unwrap();
        left.admit(TuId(7), SimTime::ZERO).unwrap();
        assert!(left.running_actuators().count() == 1);
        let (duration, msgs) =
            handover(&mut left, &mut upper, TuId(7), SimTime::from_millis(4_000), &topo, &mut ids).unwrap();
        assert_eq!(duration, 10_000);
        assert_eq!(msgs.len(), 2);
        assert!(msgs.iter().all(|m| m.category == crate::agent::Category::TimeCritical));
        assert!(!left.holding.contains_key(&TuId(7)) && upper.holding.contains_key(&TuId(7)));
        assert_eq!(left.running_actuators().count(), 0);
        assert_eq!(upper.running_actuators().next().unwrap().1.direction.as_deref(), Some("w->e"));
    }

    #[test]
    fn expired_reservation_makes_the_tu_wait() {
        let topo = topo();
        let (mut left, mut upper) = (agent("left"), agent("upper"));
        let mut ids = 0;
        left.dispatch(&reservation(1, 7, slot("left", "w", "n", 0, true, 0, 4_000)), SimTime::ZERO, &mut ids).unwrap();
        upper
            .dispatch(&reservation(2, 7, slot("upper", "w", "e", 0, true, 4_000, 14_000)), SimTime::ZERO, &mut ids)
            .unwrap();
        left.admit(TuId(7), SimTime::ZERO).unwrap();
        let before = (left.clone(), upper.clone());
        let err = handover(&mut left, &mut upper, TuId(7), SimTime::from_millis(20_000), &topo, &mut ids).unwrap_err();
        assert!(matches!(err, HandoverError::MissingReservation { .. }));
        assert_eq!(left.holding, before.0.holding);
        assert_eq!(upper.holding, before.1.holding);
    }

    #[test]
    fn unconnected_handover_is_a_protocol_violation() {
        let topo = topo();
        let (mut left, mut right) = (agent("left"), agent("right"));
        let mut ids = 0;
        left.dispatch(&reservation(1, 7, slot("left", "w", "n", 0, true, 0, 4_000)), SimTime::ZERO, &mut ids).unwrap();
        left.admit(TuId(7), SimTime::ZERO).unwrap();
        assert!(matches!(
            handover(&mut left, &mut right, TuId(7), SimTime::from_millis(4_000), &topo, &mut ids),
            Err(HandoverError::NotConnected { .. })
        ));
    }

    #[test]
    fn simultaneous_opposing_handovers_admit_only_the_lower_tu() {
        let topo = topo();
        let (mut left, mut upper, mut right) = (agent("left"), agent("upper"), agent("right"));
        // Bypass the reservation check to stage the race directly.
        let up = slot("upper", "w", "e", 0, true, 4_000, 14_000);
        let down = slot("upper", "e", "w", 0, false, 4_000, 14_000);
        upper.material_flow.slots.insert(TuId(1), up);
        upper.material_flow.slots.insert(TuId(2), down);
        left.material_flow.slots.insert(TuId(1), slot("left", "w", "n", 0, true, 0, 4_000));
        right.material_flow.slots.insert(TuId(2), slot("right", "w", "s", 1, true, 0, 4_000));
        left.admit(TuId(1), SimTime::ZERO).unwrap();
        right.admit(TuId(2), SimTime::ZERO).unwrap();
        let now = SimTime::from_millis(4_000);
        let mut ids = 0;
        // Handovers within one instant are processed in TU-id order.
        let first = handover(&mut left, &mut upper, TuId(1), now, &topo, &mut ids);
        let second = handover(&mut right, &mut upper, TuId(2), now, &topo, &mut ids);
        assert!(first.is_ok());
        assert!(matches!(second, Err(HandoverError::MissingReservation { .. })));
        assert_eq!(upper.holding.keys().copied().collect::<Vec<_>>(), vec![TuId(1)]);
        assert!(right.holding.contains_key(&TuId(2)));
    }

    #[test]
    fn hierarchy_holds_for_every_actuator() {
        let mut a = agent("upper");
        let mut ids = 0;
        a.dispatch(&reservation(1, 3, slot("upper", "w", "e", 0, true, 0, 10_000)), SimTime::ZERO, &mut ids).unwrap();
        a.admit(TuId(3), SimTime::from_millis(1)).unwrap();
        let effects = a.take_effects();
        assert!(matches!(effects[0], LevelEffect::SequenceQueued { .. }));
        assert!(matches!(effects[1], LevelEffect::ActuatorOn { .. }));
        for (_, act) in a.running_actuators() {
            for tu in &act.tus {
                assert!(a.functional.sequences.contains_key(tu));
                assert!(a.material_flow.slots.contains_key(tu));
            }
        }
    }

    #[test]
    fn dispatch_rejects_misaddressed_and_unroutable_messages() {
        let mut a = agent("upper");
        let mut ids = 0;
        let m = reservation(1, 1, slot("lower", "w", "e", 0, true, 0, 1));
        assert!(matches!(a.dispatch(&m, SimTime::ZERO, &mut ids), Err(ProtocolError::NotAddressed(..))));
        let cmd = AgentMessage::new(
            2,
            SimTime::ZERO,
            Party::Coordinator,
            a.party(),
            Performative::Request,
            "c",
            Payload::OperatorCommand { command_id: "x".into(), summary: "pause".into() },
        );
        assert!(matches!(a.dispatch(&cmd, SimTime::ZERO, &mut ids), Err(ProtocolError::Unroutable { .. })));
    }

    #[test]
    fn inbox_serves_time_critical_first() {
        let mut a = agent("upper");
        let beat = AgentMessage::new(
            1,
            SimTime::ZERO,
            Party::Coordinator,
            Party::Broadcast,
            Performative::Inform,
            "hb",
            Payload::StatusReport {
                module_id: "left".into(),
                operational_state: OperationalState::Operational,
                workload: 0.0,
                sent_at: SimTime::from_millis(3),
            },
        );
        let hs = AgentMessage::new(
            2,
            SimTime::ZERO,
            Party::Module("left".into()),
            a.party(),
            Performative::Refuse,
            "h",
            Payload::HandoverSync { tu_id: TuId(1), from: "upper".into(), to: "left".into() },
        );
        a.enqueue(beat);
        a.enqueue(hs);
        let mut ids = 0;
        let results = a.process_inbox(SimTime::ZERO, &mut ids);
        assert_eq!(results.len(), 2);
        assert_eq!(a.configuration.coordinator_beat, Some(SimTime::from_millis(3)));
    }

    #[test]
    fn portal_sequence_lifts_and_moves() {
        let mut d = agent("upper").descriptor;
        d.module_kind = ModuleKind::Manipulation;
        d.abilities.push(crate::model::Ability::new(AbilityKind::Lift));
        let a = AgentState::new(d);
        let seq = a.plan_sequence(TuId(1), &slot("upper", "w", "e", 0, true, 0, 20_000));
        assert!(seq.is_valid());
        assert_eq!(seq.steps.len(), 3);
        assert_eq!(seq.steps.iter().map(|s| s.expected_duration).sum::<f64>(), 20.0);
    }
}
