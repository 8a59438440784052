use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{InterfaceId, ModuleId, TuId};
use crate::routing::{ScheduleError, Traversal};
use crate::time::SimTime;

/// One booked occupancy of a module link.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reservation {
    pub start: SimTime,
    pub end: SimTime,
    pub tu_id: TuId,
    pub link: usize,
    pub forward: bool,
}

impl Reservation {
    fn overlaps(&self, start: SimTime, end: SimTime) -> bool {
        self.start < end && start < self.end
    }
}

/// Firm bookings of a single module, sorted by start.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservationTable {
    pub module_id: ModuleId,
    entries: Vec<Reservation>,
    /// Longest interval ever booked; bounds the overlap search window.
    max_len: u64,
}

impl ReservationTable {
    pub fn new(module_id: ModuleId) -> Self {
        ReservationTable { module_id, entries: Vec::new(), max_len: 0 }
    }

    pub fn entries(&self) -> &[Reservation] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entries intersecting `[start, end)`.
    pub fn overlapping(&self, start: SimTime, end: SimTime) -> impl Iterator<Item = &Reservation> {
        let lo = self.entries.partition_point(|e| e.start.as_millis() + self.max_len <= start.as_millis());
        self.entries[lo..].iter().take_while(move |e| e.start < end).filter(move |e| e.overlaps(start, end))
    }

    pub(crate) fn insert(&mut self, entry: Reservation) {
        self.max_len = self.max_len.max(entry.end - entry.start);
        let at = self.entries.partition_point(|e| e <= &entry);
        self.entries.insert(at, entry);
    }

    pub(crate) fn remove_tu(&mut self, tu: TuId) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.tu_id != tu);
        before - self.entries.len()
    }

    /// Drops entries that ended at or before `t`.
    pub fn prune_before(&mut self, t: SimTime) {
        self.entries.retain(|e| e.end > t);
    }

    /// Earliest start at or after which a traversal occupying `[start, end)` could fit,
    /// or `None` when it fits now.
    pub fn conflict(&self, hop: &Traversal, start: SimTime, end: SimTime, exclude: Option<TuId>) -> Option<SimTime> {
        let probe =
            Reservation { start, end, tu_id: exclude.unwrap_or(TuId(u64::MAX)), link: hop.link, forward: hop.forward };
        self.conflict_with(&probe, hop.reversible, hop.concurrent_tus)
    }

    /// Like [`conflict`](Self::conflict) for a candidate entry; entries of the candidate's own TU are ignored.
    pub fn conflict_with(&self, probe: &Reservation, reversible: bool, concurrent_tus: u32) -> Option<SimTime> {
        let same_link =
            || self.overlapping(probe.start, probe.end).filter(move |e| e.link == probe.link && e.tu_id != probe.tu_id);
        if reversible {
            let opposing_end = same_link().filter(|e| e.forward != probe.forward).map(|e| e.end).max();
            if let Some(t) = opposing_end {
                return Some(t);
            }
        }
        let along: Vec<&Reservation> = same_link().filter(|e| e.forward == probe.forward).collect();
        if along.len() < concurrent_tus as usize {
            return None;
        }
        if peak_overlap(&along, probe.start, probe.end) < concurrent_tus as usize {
            return None;
        }
        along.iter().map(|e| e.end).min()
    }

    /// Whether two TUs ever hold one link in opposing directions at once.
    pub fn has_opposing_overlap(&self) -> bool {
        self.entries.iter().enumerate().any(|(i, a)| {
            self.entries[i + 1..]
                .iter()
                .take_while(|b| b.start < a.end)
                .any(|b| b.link == a.link && b.forward != a.forward && b.overlaps(a.start, a.end))
        })
    }

    /// Largest number of same-direction TUs sharing a link at one instant, per (link, direction).
    pub fn peak_concurrency(&self) -> BTreeMap<(usize, bool), usize> {
        let mut out: BTreeMap<(usize, bool), usize> = BTreeMap::new();
        let mut groups: BTreeMap<(usize, bool), Vec<&Reservation>> = BTreeMap::new();
        for e in &self.entries {
            groups.entry((e.link, e.forward)).or_default().push(e);
        }
        for (key, list) in groups {
            out.insert(key, peak_overlap(&list, SimTime::ZERO, SimTime::MAX));
        }
        out
    }
}

/// Maximum number of intervals covering one instant inside `[start, end)`.
fn peak_overlap(entries: &[&Reservation], start: SimTime, end: SimTime) -> usize {
    let mut edges: Vec<(SimTime, i32)> = Vec::with_capacity(entries.len() * 2);
    for e in entries {
        edges.push((e.start.max(start), 1));
        edges.push((e.end.min(end), -1));
    }
    // Ends sort before starts at the same instant: half-open intervals.
    edges.sort();
    let (mut cur, mut peak) = (0i32, 0i32);
    for (_, d) in edges {
        cur += d;
        peak = peak.max(cur);
    }
    peak as usize
}

/// Reservation tables of all modules plus an index of which modules hold each TU.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservationTables {
    tables: BTreeMap<ModuleId, ReservationTable>,
    by_tu: BTreeMap<TuId, BTreeSet<ModuleId>>,
}

impl ReservationTables {
    pub fn new() -> Self {
        ReservationTables::default()
    }

    pub fn table(&self, module: &ModuleId) -> Option<&ReservationTable> {
        self.tables.get(module)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModuleId, &ReservationTable)> {
        self.tables.iter()
    }

    pub fn contains_tu(&self, tu: TuId) -> bool {
        self.by_tu.contains_key(&tu)
    }

    pub fn scheduled_tus(&self) -> impl Iterator<Item = TuId> + '_ {
        self.by_tu.keys().copied()
    }

    /// Books `schedule` without checking for conflicts.
    fn book(&mut self, schedule: &Schedule) {
        for slot in &schedule.slots {
            self.tables
                .entry(slot.module_id.clone())
                .or_insert_with(|| ReservationTable::new(slot.module_id.clone()))
                .insert(Reservation {
                    start: slot.start,
                    end: slot.end,
                    tu_id: schedule.tu_id,
                    link: slot.link,
                    forward: slot.forward,
                });
            self.by_tu.entry(schedule.tu_id).or_default().insert(slot.module_id.clone());
        }
    }

    /// Earliest time the hop starting at `start` could be moved to, if it conflicts.
    pub fn conflict(&self, hop: &Traversal, start: SimTime, exclude: Option<TuId>) -> Option<SimTime> {
        let end = start + hop.process_time_ms;
        self.tables.get(&hop.module_id).and_then(|t| t.conflict(hop, start, end, exclude))
    }

    pub fn prune_before(&mut self, t: SimTime) {
        for table in self.tables.values_mut() {
            table.prune_before(t);
        }
        let tables = &self.tables;
        self.by_tu.retain(|tu, modules| {
            modules.retain(|m| tables.get(m).is_some_and(|t| t.entries.iter().any(|e| e.tu_id == *tu)));
            !modules.is_empty()
        });
    }

    /// Whether any table holds opposing overlapping entries on one link.
    pub fn anisotropy_safe(&self) -> bool {
        self.tables.values().all(|t| !t.has_opposing_overlap())
    }
}

/// A booked pass through one module.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub module_id: ModuleId,
    pub link: usize,
    pub forward: bool,
    pub entry: InterfaceId,
    pub exit: InterfaceId,
    pub start: SimTime,
    pub end: SimTime,
}

/// The firm timetable of one TU along its whole path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub tu_id: TuId,
    pub slots: Vec<Slot>,
}

impl Schedule {
    pub fn start(&self) -> SimTime {
        self.slots.first().map_or(SimTime::ZERO, |s| s.start)
    }

    /// When the TU leaves the sink module.
    pub fn sink_arrival(&self) -> SimTime {
        self.slots.last().map_or(SimTime::ZERO, |s| s.end)
    }

    pub fn slot_at(&self, t: SimTime) -> Option<&Slot> {
        self.slots.iter().find(|s| s.start <= t && t < s.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    /// How far past the release the first slot may start, milliseconds.
    pub horizon_ms: u64,
    /// The TU must not leave the sink before this instant.
    pub min_sink_arrival: SimTime,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions { horizon_ms: 3_600_000, min_sink_arrival: SimTime::ZERO }
    }
}

fn layout(hops: &[Traversal], start: SimTime) -> Vec<(SimTime, SimTime)> {
    let mut t = start;
    hops.iter()
        .map(|h| {
            let s = t;
            t += h.process_time_ms;
            (s, t)
        })
        .collect()
}

/// Books back-to-back intervals along `hops` at the earliest conflict-free start.
///
/// The whole path moves as one block: any conflict shifts every interval later and
/// the search restarts, so nothing is booked until the full chain fits.
pub fn schedule_transport(
    hops: &[Traversal],
    tu: TuId,
    release: SimTime,
    tables: &mut ReservationTables,
    opts: &ScheduleOptions,
) -> Result<Schedule, ScheduleError> {
    if hops.is_empty() {
        return Err(ScheduleError::EmptyRoute);
    }
    let total: u64 = hops.iter().map(|h| h.process_time_ms).sum();
    let mut start = release.max(SimTime::from_millis(opts.min_sink_arrival.as_millis().saturating_sub(total)));
    let limit = release + opts.horizon_ms;
    'search: loop {
        if start > limit {
            return Err(ScheduleError::HorizonExceeded { tu, earliest: start });
        }
        for (hop, (s, _)) in hops.iter().zip(layout(hops, start)) {
            if let Some(free_at) = tables.conflict(hop, s, None) {
                start += free_at - s;
                continue 'search;
            }
        }
        // A path using one link twice must not collide with itself.
        let intervals = layout(hops, start);
        for i in 0..hops.len() {
            for j in i + 1..hops.len() {
                let (a, b) = (&hops[i], &hops[j]);
                if a.link_key() == b.link_key() && a.forward != b.forward && a.reversible {
                    let (si, ei) = intervals[i];
                    let (sj, _) = intervals[j];
                    if sj < ei && si < sj + b.process_time_ms {
                        return Err(ScheduleError::HorizonExceeded { tu, earliest: start });
                    }
                }
            }
        }
        break;
    }
    let schedule = Schedule {
        tu_id: tu,
        slots: hops
            .iter()
            .zip(layout(hops, start))
            .map(|(h, (s, e))| Slot {
                module_id: h.module_id.clone(),
                link: h.link,
                forward: h.forward,
                entry: h.entry.clone(),
                exit: h.exit.clone(),
                start: s,
                end: e,
            })
            .collect(),
    };
    tables.book(&schedule);
    Ok(schedule)
}

/// Removes every booking of `tu`.
pub fn release_schedule(tables: &mut ReservationTables, tu: TuId) -> Result<(), ScheduleError> {
    let modules = tables.by_tu.remove(&tu).ok_or(ScheduleError::UnknownTu(tu))?;
    for m in modules {
        if let Some(t) = tables.tables.get_mut(&m) {
            t.remove_tu(tu);
            if t.is_empty() {
                tables.tables.remove(&m);
            }
        }
    }
    Ok(())
}
