use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::message::{AgentMessage, Category, Performative};
use crate::ids::{ModuleId, RelationId, RouteId, TuId};
use crate::model::ModuleDescriptor;
use crate::time::SimTime;

/// Scheduling-relevant facts about one internal link, recorded so logs can be checked standalone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkInfo {
    pub link: usize,
    pub reversible: bool,
    pub concurrent_tus: u32,
}

impl LinkInfo {
    pub fn of(descriptor: &ModuleDescriptor) -> Vec<LinkInfo> {
        descriptor
            .internal_links
            .iter()
            .enumerate()
            .map(|(link, l)| LinkInfo { link, reversible: l.reversible, concurrent_tus: l.concurrent_tus() })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Header {
        scenario: String,
        seed: u64,
        strategy: String,
        horizon_ms: u64,
        modules: Vec<(ModuleId, Vec<LinkInfo>)>,
        relations: Vec<RelationId>,
    },
    Message {
        message_id: u64,
        sender: String,
        receiver: String,
        category: Category,
        performative: Performative,
        conversation_id: String,
        kind: String,
        digest: String,
    },
    Released {
        tu_id: TuId,
        relation_id: RelationId,
    },
    Scheduled {
        tu_id: TuId,
        relation_id: RelationId,
        route_id: Option<RouteId>,
        /// Earliest possible start given planning latency.
        earliest: SimTime,
        start: SimTime,
        sink_arrival: SimTime,
        path: Vec<ModuleId>,
    },
    Blocked {
        tu_id: TuId,
        relation_id: RelationId,
        reason: String,
    },
    Entered {
        tu_id: TuId,
        module_id: ModuleId,
        link: usize,
        forward: bool,
    },
    Left {
        tu_id: TuId,
        module_id: ModuleId,
        link: usize,
        forward: bool,
    },
    Delivered {
        tu_id: TuId,
        relation_id: RelationId,
        released_at: SimTime,
    },
    SequenceQueued {
        module_id: ModuleId,
        tu_id: TuId,
        steps: usize,
    },
    SequenceDone {
        module_id: ModuleId,
        tu_id: TuId,
    },
    ActuatorOn {
        module_id: ModuleId,
        actuator_id: String,
        tu_id: TuId,
        direction: String,
    },
    ActuatorOff {
        module_id: ModuleId,
        actuator_id: String,
        tu_id: TuId,
    },
    CoordinatorElected {
        module_id: ModuleId,
    },
    CoordinatorLost {
        module_id: ModuleId,
    },
    ModuleAdded {
        module_id: ModuleId,
        links: Vec<LinkInfo>,
    },
    ModuleLeaving {
        module_id: ModuleId,
    },
    ModuleRemoved {
        module_id: ModuleId,
    },
    RouteInstalled {
        route_id: RouteId,
        relation_id: RelationId,
        path: Vec<ModuleId>,
        reserved_capacity: f64,
        expected_process_time: f64,
    },
    RouteRevoked {
        route_id: RouteId,
        relation_id: RelationId,
    },
    RelationUnrouted {
        relation_id: RelationId,
        reason: String,
    },
    DemandChanged {
        relation_id: RelationId,
        required_throughput: f64,
    },
    StrategyChanged {
        strategy: String,
    },
    OperatorCommand {
        command_id: String,
        accepted: bool,
        detail: String,
    },
    Diagnostic {
        agent: String,
        message: String,
    },
}

impl LogEntry {
    pub fn message(m: &AgentMessage) -> LogEntry {
        LogEntry::Message {
            message_id: m.message_id,
            sender: m.sender.to_string(),
            receiver: m.receiver.to_string(),
            category: m.category,
            performative: m.performative,
            conversation_id: m.conversation_id.clone(),
            kind: m.payload.kind().to_owned(),
            digest: m.payload.digest(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: SimTime,
    #[serde(flatten)]
    pub entry: LogEntry,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Append-only record stream of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn push(&mut self, t: SimTime, entry: LogEntry) {
        self.records.push(LogRecord { t, entry });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_jsonl(text: &str) -> Result<EventLog, LogError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(line).map_err(|e| LogError::Malformed { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        Ok(EventLog { records })
    }
}

impl FromIterator<LogRecord> for EventLog {
    fn from_iter<I: IntoIterator<Item = LogRecord>>(iter: I) -> Self {
        EventLog { records: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut log = EventLog::new();
        log.push(SimTime::ZERO, LogEntry::Released { tu_id: TuId(1), relation_id: "r".into() });
        log.push(
            SimTime::from_millis(1500),
            LogEntry::Scheduled {
                tu_id: TuId(1),
                relation_id: "r".into(),
                route_id: Some("ssr-0001".into()),
                earliest: SimTime::from_millis(100),
                start: SimTime::from_millis(100),
                sink_arrival: SimTime::from_millis(9100),
                path: vec!["a".into(), "b".into()],
            },
        );
        let text = log.to_jsonl();
        assert!(text.lines().next().unwrap().starts_with("{\"t\":0,\"type\":\"released\""));
        assert_eq!(EventLog::from_jsonl(&text).unwrap(), log);
    }

    #[test]
    fn malformed_line_is_reported() {
        let err = EventLog::from_jsonl("{\"t\":0,\"type\":\"released\",\"tu_id\":1,\"relation_id\":\"r\"}\nnot json\n")
            .unwrap_err();
        assert!(matches!(err, LogError::Malformed { line: 2, .. }));
    }
}
