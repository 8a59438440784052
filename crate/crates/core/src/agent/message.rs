use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ids::{ModuleId, RelationId, RouteId, TuId};
use crate::model::OperationalState;
use crate::routing::{RouteSegment, Slot};
use crate::time::SimTime;
use crate::topology::Placement;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// Handover synchronisation; delivered within the same instant.
    TimeCritical,
    Planning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Performative {
    Request,
    Inform,
    Agree,
    Refuse,
    Confirm,
    Failure,
}

/// Sender or receiver of a message.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Party {
    Coordinator,
    Broadcast,
    Module(ModuleId),
}

impl From<String> for Party {
    fn from(s: String) -> Self {
        match s.as_str() {
            "coordinator" => Party::Coordinator,
            "broadcast" => Party::Broadcast,
            _ => Party::Module(ModuleId::from(s)),
        }
    }
}

impl From<Party> for String {
    fn from(p: Party) -> String {
        p.to_string()
    }
}

impl From<&ModuleId> for Party {
    fn from(m: &ModuleId) -> Self {
        Party::Module(m.clone())
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Coordinator => f.write_str("coordinator"),
            Party::Broadcast => f.write_str("broadcast"),
            Party::Module(m) => f.write_str(m.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Registration {
        module_id: ModuleId,
        placement: Placement,
    },
    TopologyUpdate {
        revision: u64,
        modules: usize,
        connections: usize,
    },
    RouteProposal {
        route_id: RouteId,
        relation_id: RelationId,
        segment: RouteSegment,
        reserved_capacity: f64,
    },
    ReservationRequest {
        tu_id: TuId,
        relation_id: RelationId,
        slot: Slot,
        reversible: bool,
        concurrent_tus: u32,
    },
    HandoverSync {
        tu_id: TuId,
        from: ModuleId,
        to: ModuleId,
    },
    StatusReport {
        module_id: ModuleId,
        operational_state: OperationalState,
        workload: f64,
        /// When the beat was sent; liveness is judged from this, not the arrival time.
        sent_at: SimTime,
    },
    OperatorCommand {
        command_id: String,
        summary: String,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Registration { .. } => "registration",
            Payload::TopologyUpdate { .. } => "topology_update",
            Payload::RouteProposal { .. } => "route_proposal",
            Payload::ReservationRequest { .. } => "reservation_request",
            Payload::HandoverSync { .. } => "handover_sync",
            Payload::StatusReport { .. } => "status_report",
            Payload::OperatorCommand { .. } => "operator_command",
        }
    }

    /// The only category this payload may travel in.
    pub fn category(&self) -> Category {
        match self {
            Payload::HandoverSync { .. } => Category::TimeCritical,
            _ => Category::Planning,
        }
    }

    /// Hex SHA-256 of the payload's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("payloads serialize");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub message_id: u64,
    pub sent_at: SimTime,
    pub sender: Party,
    pub receiver: Party,
    pub category: Category,
    pub performative: Performative,
    pub conversation_id: String,
    pub payload: Payload,
}

impl AgentMessage {
    /// Builds a message whose category follows from its payload.
    pub fn new(
        message_id: u64,
        sent_at: SimTime,
        sender: Party,
        receiver: Party,
        performative: Performative,
        conversation_id: impl Into<String>,
        payload: Payload,
    ) -> Self {
        AgentMessage {
            message_id,
            sent_at,
            sender,
            receiver,
            category: payload.category(),
            performative,
            conversation_id: conversation_id.into(),
            payload,
        }
    }

    /// A reply within the same conversation, addressed back to the sender.
    pub fn reply(
        &self,
        message_id: u64,
        sent_at: SimTime,
        from: Party,
        performative: Performative,
        payload: Payload,
    ) -> Self {
        AgentMessage::new(
            message_id,
            sent_at,
            from,
            self.sender.clone(),
            performative,
            self.conversation_id.clone(),
            payload,
        )
    }

    /// Whether the category matches the payload kind.
    pub fn is_well_formed(&self) -> bool {
        self.category == self.payload.category()
    }

    pub fn is_for(&self, module: &ModuleId) -> bool {
        match &self.receiver {
            Party::Broadcast => true,
            Party::Module(m) => m == module,
            Party::Coordinator => false,
        }
    }
}
