//! Invariant checks over finished event logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::agent::{EventLog, LinkInfo, LogEntry};
use crate::ids::{ModuleId, RelationId, TuId};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub t: SimTime,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.t, self.message)
    }
}

fn violation(t: SimTime, message: String) -> Violation {
    Violation { t, message }
}

fn link_table(log: &EventLog) -> BTreeMap<(ModuleId, usize), LinkInfo> {
    let mut out = BTreeMap::new();
    for r in log.records() {
        let mut add = |m: &ModuleId, links: &[LinkInfo]| {
            for l in links {
                out.insert((m.clone(), l.link), l.clone());
            }
        };
        match &r.entry {
            LogEntry::Header { modules, .. } => modules.iter().for_each(|(m, links)| add(m, links)),
            LogEntry::ModuleAdded { module_id, links } => add(module_id, links),
            _ => {}
        }
    }
    out
}

#[derive(Clone, Debug)]
struct Stay {
    tu: TuId,
    forward: bool,
    from: SimTime,
    to: SimTime,
}

/// Time each TU spent on each link, from entered/left pairs. Unclosed stays run to the end of the log.
fn stays(log: &EventLog) -> BTreeMap<(ModuleId, usize), Vec<Stay>> {
    let end = log.records().last().map_or(SimTime::ZERO, |r| r.t);
    let mut open: BTreeMap<(TuId, ModuleId), (usize, bool, SimTime)> = BTreeMap::new();
    let mut out: BTreeMap<(ModuleId, usize), Vec<Stay>> = BTreeMap::new();
    for r in log.records() {
        match &r.entry {
            LogEntry::Entered { tu_id, module_id, link, forward } => {
                open.insert((*tu_id, module_id.clone()), (*link, *forward, r.t));
            }
            LogEntry::Left { tu_id, module_id, .. } => {
                if let Some((link, forward, from)) = open.remove(&(*tu_id, module_id.clone())) {
                    out.entry((module_id.clone(), link)).or_default().push(Stay { tu: *tu_id, forward, from, to: r.t });
                }
            }
            _ => {}
        }
    }
    for ((tu, m), (link, forward, from)) in open {
        out.entry((m, link)).or_default().push(Stay { tu, forward, from, to: end });
    }
    out
}

/// Opposing TUs on one reversible link at the same time.
pub fn opposing_overlaps(log: &EventLog) -> Vec<Violation> {
    let links = link_table(log);
    let mut out = Vec::new();
    for ((m, link), list) in stays(log) {
        if !links.get(&(m.clone(), link)).is_some_and(|l| l.reversible) {
            continue;
        }
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                if a.forward != b.forward && a.from < b.to && b.from < a.to {
                    out.push(violation(
                        a.from.max(b.from),
                        format!("{} and {} traverse {m}#{link} in opposing directions", a.tu, b.tu),
                    ));
                }
            }
        }
    }
    out
}

/// More same-direction TUs on a link than it can hold.
pub fn concurrency_overflows(log: &EventLog) -> Vec<Violation> {
    let links = link_table(log);
    let mut out = Vec::new();
    for ((m, link), list) in stays(log) {
        let limit = links.get(&(m.clone(), link)).map_or(1, |l| l.concurrent_tus) as i64;
        let mut edges: Vec<(SimTime, i64)> = list.iter().flat_map(|s| [(s.from, 1), (s.to, -1)]).collect();
        edges.sort();
        let mut cur = 0;
        for (t, d) in edges {
            cur += d;
            if cur > limit {
                out.push(violation(t, format!("{cur} TUs on {m}#{link}, limit {limit}")));
            }
        }
    }
    out
}

/// Per relation, deliveries must follow release order without gaps.
pub fn sequence_violations(log: &EventLog) -> Vec<Violation> {
    let mut released: BTreeMap<RelationId, Vec<TuId>> = BTreeMap::new();
    let mut delivered: BTreeMap<RelationId, Vec<(SimTime, TuId)>> = BTreeMap::new();
    for r in log.records() {
        match &r.entry {
            LogEntry::Released { tu_id, relation_id } => released.entry(relation_id.clone()).or_default().push(*tu_id),
            LogEntry::Delivered { tu_id, relation_id, .. } => {
                delivered.entry(relation_id.clone()).or_default().push((r.t, *tu_id))
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for (rel, got) in delivered {
        let want = released.get(&rel).map(Vec::as_slice).unwrap_or_default();
        for (k, (t, tu)) in got.iter().enumerate() {
            if want.get(k) != Some(tu) {
                out.push(violation(*t, format!("relation {rel}: delivery #{k} is {tu}, expected {:?}", want.get(k))));
                break;
            }
        }
    }
    out
}

/// Scheduled TUs that were not delivered at their booked sink arrival, or later than `deadline`.
pub fn late_or_missing_deliveries(log: &EventLog, deadline: SimTime) -> Vec<Violation> {
    let mut booked: BTreeMap<TuId, (SimTime, SimTime)> = BTreeMap::new();
    let mut out = Vec::new();
    for r in log.records() {
        match &r.entry {
            LogEntry::Scheduled { tu_id, sink_arrival, .. } => {
                booked.insert(*tu_id, (r.t, *sink_arrival));
            }
            LogEntry::Delivered { tu_id, .. } => match booked.remove(tu_id) {
                Some((_, due)) if due != r.t => {
                    out.push(violation(r.t, format!("{tu_id} delivered at {} but booked for {due}", r.t)))
                }
                Some(_) if r.t > deadline => out.push(violation(r.t, format!("{tu_id} delivered after {deadline}"))),
                Some(_) => {}
                None => out.push(violation(r.t, format!("{tu_id} delivered without a schedule"))),
            },
            _ => {}
        }
    }
    for (tu, (t, due)) in booked {
        out.push(violation(t, format!("{tu} scheduled for {due} but never delivered")));
    }
    out
}

/// Actuators only run while their module has a sequence queued for that TU.
pub fn hierarchy_violations(log: &EventLog) -> Vec<Violation> {
    let mut queued: BTreeSet<(ModuleId, TuId)> = BTreeSet::new();
    let mut running: BTreeSet<(ModuleId, String, TuId)> = BTreeSet::new();
    let mut out = Vec::new();
    for r in log.records() {
        match &r.entry {
            LogEntry::SequenceQueued { module_id, tu_id, .. } => {
                queued.insert((module_id.clone(), *tu_id));
            }
            LogEntry::ActuatorOn { module_id, actuator_id, tu_id, .. } => {
                if !queued.contains(&(module_id.clone(), *tu_id)) {
                    out.push(violation(
                        r.t,
                        format!("{module_id}/{actuator_id} started for {tu_id} without a sequence"),
                    ));
                }
                running.insert((module_id.clone(), actuator_id.clone(), *tu_id));
            }
            LogEntry::ActuatorOff { module_id, actuator_id, tu_id } => {
                running.remove(&(module_id.clone(), actuator_id.clone(), *tu_id));
            }
            LogEntry::SequenceDone { module_id, tu_id } => {
                if running.iter().any(|(m, _, t)| m == module_id && t == tu_id) {
                    out.push(violation(r.t, format!("{module_id} finished {tu_id} with actuators still running")));
                }
                queued.remove(&(module_id.clone(), *tu_id));
            }
            _ => {}
        }
    }
    out
}

/// Counts of TUs by how far they got.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TuAccount {
    pub released: usize,
    pub scheduled: usize,
    pub delivered: usize,
}

pub fn tu_account(log: &EventLog) -> TuAccount {
    let mut a = TuAccount::default();
    for r in log.records() {
        match r.entry {
            LogEntry::Released { .. } => a.released += 1,
            LogEntry::Scheduled { .. } => a.scheduled += 1,
            LogEntry::Delivered { .. } => a.delivered += 1,
            _ => {}
        }
    }
    a
}

/// Distinct module sequences each relation's TUs were scheduled on.
pub fn paths_used(log: &EventLog) -> BTreeMap<RelationId, BTreeSet<Vec<ModuleId>>> {
    let mut out: BTreeMap<RelationId, BTreeSet<Vec<ModuleId>>> = BTreeMap::new();
    for r in log.records() {
        if let LogEntry::Scheduled { relation_id, path, .. } = &r.entry {
            out.entry(relation_id.clone()).or_default().insert(path.clone());
        }
    }
    out
}
