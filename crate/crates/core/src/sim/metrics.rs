use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{EventLog, LogEntry, LogRecord};
use crate::ids::{ModuleId, RelationId, TuId};
use crate::time::SimTime;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub relation_id: RelationId,
    pub released: usize,
    /// Deliveries up to the horizon.
    pub delivered: usize,
    /// TUs per minute.
    pub throughput: f64,
    /// Release to delivery, seconds.
    pub mean_process_time: f64,
    pub p95_process_time: f64,
    /// Seconds TUs spent waiting beyond planning latency, clipped to the horizon.
    pub blocked_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModuleMetrics {
    pub module_id: ModuleId,
    /// Seconds with at least one TU on the module.
    pub busy_time: f64,
    pub utilization: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: f64,
    pub relations: Vec<RelationMetrics>,
    pub modules: Vec<ModuleMetrics>,
    pub total_released: usize,
    pub total_delivered: usize,
    /// TUs per minute over all relations.
    pub total_throughput: f64,
    pub total_blocked_time: f64,
}

impl MetricsReport {
    pub fn relation(&self, id: &str) -> Option<&RelationMetrics> {
        self.relations.iter().find(|r| r.relation_id.as_str() == id)
    }

    pub fn module(&self, id: &str) -> Option<&ModuleMetrics> {
        self.modules.iter().find(|m| m.module_id.as_str() == id)
    }

    /// Plain-text tables for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>9} {:>12} {:>10} {:>10} {:>11}",
            "relation", "released", "delivered", "tu/min", "mean s", "p95 s", "blocked s"
        );
        for r in &self.relations {
            let _ = writeln!(
                s,
                "{:<16} {:>8} {:>9} {:>12.3} {:>10.2} {:>10.2} {:>11.1}",
                r.relation_id,
                r.released,
                r.delivered,
                r.throughput,
                r.mean_process_time,
                r.p95_process_time,
                r.blocked_time
            );
        }
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>9} {:>12.3} {:>10} {:>10} {:>11.1}",
            "total", self.total_released, self.total_delivered, self.total_throughput, "", "", self.total_blocked_time
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16} {:>10} {:>11}", "module", "busy s", "utilization");
        for m in &self.modules {
            let _ = writeln!(s, "{:<16} {:>10.1} {:>11.3}", m.module_id, m.busy_time, m.utilization);
        }
        s
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("record {index}: {tu} {what}")]
    Inconsistent { index: usize, tu: TuId, what: &'static str },
}

#[derive(Clone, Debug, Default)]
struct TuTrack {
    relation_id: RelationId,
    released: SimTime,
    /// Planning latency observed when the TU was scheduled.
    latency: Option<u64>,
    start: Option<SimTime>,
    delivered: Option<SimTime>,
}

/// Folds log records into metrics. The simulator feeds it live; [`compute_metrics`] replays a whole log.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    relations: BTreeSet<RelationId>,
    modules: BTreeSet<ModuleId>,
    tus: BTreeMap<TuId, TuTrack>,
    busy: BTreeMap<ModuleId, Vec<(SimTime, SimTime)>>,
    on_module: BTreeMap<(TuId, ModuleId), SimTime>,
    seen: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        MetricsAccumulator::default()
    }

    pub fn observe(&mut self, r: &LogRecord) -> Result<(), MetricsError> {
        let index = self.seen;
        self.seen += 1;
        let bad = |tu: TuId, what| MetricsError::Inconsistent { index, tu, what };
        match &r.entry {
            LogEntry::Header { modules, relations, .. } => {
                self.modules.extend(modules.iter().map(|(m, _)| m.clone()));
                self.relations.extend(relations.iter().cloned());
            }
            LogEntry::ModuleAdded { module_id, .. } => {
                self.modules.insert(module_id.clone());
            }
            LogEntry::Released { tu_id, relation_id } => {
                self.relations.insert(relation_id.clone());
                let track = TuTrack { relation_id: relation_id.clone(), released: r.t, ..TuTrack::default() };
                if self.tus.insert(*tu_id, track).is_some() {
                    return Err(bad(*tu_id, "released twice"));
                }
            }
            LogEntry::Scheduled { tu_id, earliest, start, .. } => {
                let t = self.tus.get_mut(tu_id).ok_or_else(|| bad(*tu_id, "scheduled before release"))?;
                t.latency = Some(earliest.saturating_sub(r.t));
                t.start = Some(*start);
            }
            LogEntry::Entered { tu_id, module_id, .. } => {
                if !self.tus.contains_key(tu_id) {
                    return Err(bad(*tu_id, "entered before release"));
                }
                self.modules.insert(module_id.clone());
                self.on_module.insert((*tu_id, module_id.clone()), r.t);
            }
            LogEntry::Left { tu_id, module_id, .. } => {
                let since = self
                    .on_module
                    .remove(&(*tu_id, module_id.clone()))
                    .ok_or_else(|| bad(*tu_id, "left a module it never entered"))?;
                self.busy.entry(module_id.clone()).or_default().push((since, r.t));
            }
            LogEntry::Delivered { tu_id, .. } => {
                let t = self.tus.get_mut(tu_id).ok_or_else(|| bad(*tu_id, "delivered before release"))?;
                if t.delivered.replace(r.t).is_some() {
                    return Err(bad(*tu_id, "delivered twice"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn report(&self, horizon: SimTime) -> MetricsReport {
        let h = horizon.as_millis();
        let minutes = h as f64 / 60_000.0;
        let clip = |t: SimTime| t.as_millis().min(h);
        let mut per: BTreeMap<&RelationId, RelationMetrics> = self
            .relations
            .iter()
            .map(|id| (id, RelationMetrics { relation_id: id.clone(), ..RelationMetrics::default() }))
            .collect();
        let mut lead: BTreeMap<&RelationId, Vec<u64>> = BTreeMap::new();
        for t in self.tus.values() {
            let m = per.get_mut(&t.relation_id).expect("relations are registered on release");
            if t.released <= horizon {
                m.released += 1;
            }
            if let Some(d) = t.delivered.filter(|d| *d <= horizon) {
                m.delivered += 1;
                lead.entry(&t.relation_id).or_default().push(d - t.released);
            }
            let ready = clip(t.released + t.latency.unwrap_or(0));
            let started = t.start.map_or(h, clip);
            m.blocked_time += started.saturating_sub(ready) as f64 / 1000.0;
        }
        for (id, m) in per.iter_mut() {
            if minutes > 0.0 {
                m.throughput = m.delivered as f64 / minutes;
            }
            if let Some(v) = lead.get_mut(id) {
                v.sort_unstable();
                m.mean_process_time = v.iter().sum::<u64>() as f64 / v.len() as f64 / 1000.0;
                let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
                m.p95_process_time = v[rank - 1] as f64 / 1000.0;
            }
        }
        let modules = self
            .modules
            .iter()
            .map(|id| {
                let mut spans: Vec<(u64, u64)> = self
                    .busy
                    .get(id)
                    .into_iter()
                    .flatten()
                    .map(|(a, b)| (clip(*a), clip(*b)))
                    .chain(self.on_module.iter().filter(|((_, m), _)| m == id).map(|(_, a)| (clip(*a), h)))
                    .filter(|(a, b)| b > a)
                    .collect();
                spans.sort_unstable();
                let (mut busy, mut reach) = (0u64, 0u64);
                for (a, b) in spans {
                    let a = a.max(reach);
                    if b > a {
                        busy += b - a;
                        reach = b;
                    }
                }
                ModuleMetrics {
                    module_id: id.clone(),
                    busy_time: busy as f64 / 1000.0,
                    utilization: if h > 0 { (busy as f64 / h as f64).clamp(0.0, 1.0) } else { 0.0 },
                }
            })
            .collect();
        let relations: Vec<RelationMetrics> = per.into_values().collect();
        MetricsReport {
            horizon: horizon.as_secs(),
            total_released: relations.iter().map(|r| r.released).sum(),
            total_delivered: relations.iter().map(|r| r.delivered).sum(),
            total_throughput: relations.iter().map(|r| r.throughput).sum(),
            total_blocked_time: relations.iter().map(|r| r.blocked_time).sum(),
            relations,
            modules,
        }
    }
}

/// Metrics of a finished log; a pure function of its records.
pub fn compute_metrics(log: &EventLog, horizon: SimTime) -> Result<MetricsReport, MetricsError> {
    let mut acc = MetricsAccumulator::new();
    for r in log.records() {
        acc.observe(r)?;
    }
    Ok(acc.report(horizon))
}
