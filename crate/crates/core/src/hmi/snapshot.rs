use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ModuleId, RelationId, RouteId, TuId};
use crate::model::{Footprint, ModuleStatus};
use crate::routing::RouteStatus;
use crate::sim::{Simulation, TuState};
use crate::time::SimTime;
use crate::topology::{Connection, Placement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuatorView {
    pub actuator_id: String,
    /// Conveying direction, e.g. the traversed link orientation.
    pub direction: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleView {
    pub module_id: ModuleId,
    pub footprint: Footprint,
    pub placement: Placement,
    pub status: ModuleStatus,
    pub workload: f64,
    pub is_active_coordinator: bool,
    pub running_actuators: Vec<ActuatorView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteView {
    pub route_id: RouteId,
    pub relation_id: RelationId,
    pub path: Vec<ModuleId>,
    /// TUs per minute.
    pub reserved_capacity: f64,
    /// Deliveries per minute over the last 60 s.
    pub used_capacity: f64,
    /// Seconds from release to delivery; absent until the route delivered something.
    pub average_duration: Option<f64>,
    pub status: RouteStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderView {
    pub tu_id: TuId,
    pub relation_id: RelationId,
    pub state: TuState,
    pub route_id: Option<RouteId>,
    pub scheduled_arrival: Option<SimTime>,
}

/// Operator view of the whole system at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutSnapshot {
    /// Topology revision the snapshot was taken at.
    pub revision: u64,
    /// Position in the gateway's delta stream.
    pub seq: u64,
    pub sim_time: SimTime,
    pub modules: Vec<ModuleView>,
    pub connections: Vec<Connection>,
    pub routes: Vec<RouteView>,
    pub orders: Vec<OrderView>,
    pub strategy: String,
}

/// Reads the current simulation state. Never mutates it.
pub fn take_snapshot(sim: &Simulation, seq: u64) -> LayoutSnapshot {
    let topology = sim.topology();
    let host = sim.coordinator().host.as_ref();
    let modules = topology
        .modules()
        .iter()
        .map(|(id, entry)| {
            let agent = sim.agents().get(id);
            ModuleView {
                module_id: id.clone(),
                footprint: entry.descriptor.footprint,
                placement: entry.placement.clone(),
                status: entry.status,
                workload: agent.map_or(0.0, |a| a.workload()),
                is_active_coordinator: host == Some(id),
                running_actuators: agent
                    .into_iter()
                    .flat_map(|a| a.running_actuators())
                    .map(|(aid, st)| ActuatorView { actuator_id: aid.clone(), direction: st.direction.clone() })
                    .collect(),
            }
        })
        .collect();
    let now = sim.now();
    let routes = sim
        .routes()
        .active_routes()
        .map(|r| {
            let stats = sim.route_stats(&r.route_id);
            RouteView {
                route_id: r.route_id.clone(),
                relation_id: r.relation_id.clone(),
                path: r.path(),
                reserved_capacity: r.reserved_capacity,
                used_capacity: stats.map_or(0.0, |s| s.moving_throughput(now)),
                average_duration: stats.and_then(|s| s.average_duration()),
                status: r.status,
            }
        })
        .collect();
    let orders = sim
        .tus()
        .values()
        .map(|tu| OrderView {
            tu_id: tu.tu_id,
            relation_id: tu.relation_id.clone(),
            state: tu.state.clone(),
            route_id: tu.route_id.clone(),
            scheduled_arrival: tu.scheduled_arrival,
        })
        .collect();
    LayoutSnapshot {
        revision: topology.revision(),
        seq,
        sim_time: now,
        modules,
        connections: topology.connections().iter().cloned().collect(),
        routes,
        orders,
        strategy: sim.strategy().to_string(),
    }
}

/// Changes between two consecutive snapshots of one stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub seq: u64,
    pub prev_seq: u64,
    pub revision: u64,
    pub sim_time: SimTime,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modules_upserted: Vec<ModuleView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modules_removed: Vec<ModuleId>,
    /// Full connection list, present only when it changed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connections: Option<Vec<Connection>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes_upserted: Vec<RouteView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes_removed: Vec<RouteId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders_upserted: Vec<OrderView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders_removed: Vec<TuId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

fn diff_keyed<K: Ord + Clone, V: Clone + PartialEq>(old: &[V], new: &[V], key: impl Fn(&V) -> K) -> (Vec<V>, Vec<K>) {
    let before: BTreeMap<K, &V> = old.iter().map(|v| (key(v), v)).collect();
    let after: BTreeMap<K, &V> = new.iter().map(|v| (key(v), v)).collect();
    let upserted = after.iter().filter(|(k, v)| before.get(*k) != Some(*v)).map(|(_, v)| (*v).clone()).collect();
    let removed = before.keys().filter(|k| !after.contains_key(*k)).cloned().collect();
    (upserted, removed)
}

fn merge_keyed<K: Ord + Clone, V>(list: &mut Vec<V>, upserted: &[V], removed: &[K], key: impl Fn(&V) -> K)
where
    V: Clone,
{
    let mut map: BTreeMap<K, V> = list.drain(..).map(|v| (key(&v), v)).collect();
    for k in removed {
        map.remove(k);
    }
    for v in upserted {
        map.insert(key(v), v.clone());
    }
    list.extend(map.into_values());
}

impl Delta {
    /// Changes from `old` to `new`, or `None` if nothing an operator can see changed.
    /// The clock alone does not count as a change.
    pub fn between(old: &LayoutSnapshot, new: &LayoutSnapshot) -> Option<Delta> {
        let (modules_upserted, modules_removed) = diff_keyed(&old.modules, &new.modules, |m| m.module_id.clone());
        let (routes_upserted, routes_removed) = diff_keyed(&old.routes, &new.routes, |r| r.route_id.clone());
        let (orders_upserted, orders_removed) = diff_keyed(&old.orders, &new.orders, |o| o.tu_id);
        let delta = Delta {
            seq: old.seq + 1,
            prev_seq: old.seq,
            revision: new.revision,
            sim_time: new.sim_time,
            modules_upserted,
            modules_removed,
            connections: (old.connections != new.connections).then(|| new.connections.clone()),
            routes_upserted,
            routes_removed,
            orders_upserted,
            orders_removed,
            strategy: (old.strategy != new.strategy).then(|| new.strategy.clone()),
        };
        let unchanged = old.revision == new.revision
            && delta.modules_upserted.is_empty()
            && delta.modules_removed.is_empty()
            && delta.connections.is_none()
            && delta.routes_upserted.is_empty()
            && delta.routes_removed.is_empty()
            && delta.orders_upserted.is_empty()
            && delta.orders_removed.is_empty()
            && delta.strategy.is_none();
        (!unchanged).then_some(delta)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("delta {got} does not follow snapshot {have}; request a fresh snapshot")]
pub struct GapError {
    pub have: u64,
    pub got: u64,
}

impl LayoutSnapshot {
    /// Applies the next delta of the stream, as a client would.
    pub fn apply(&mut self, delta: &Delta) -> Result<(), GapError> {
        if delta.prev_seq != self.seq {
            return Err(GapError { have: self.seq, got: delta.prev_seq });
        }
        merge_keyed(&mut self.modules, &delta.modules_upserted, &delta.modules_removed, |m| m.module_id.clone());
        merge_keyed(&mut self.routes, &delta.routes_upserted, &delta.routes_removed, |r| r.route_id.clone());
        merge_keyed(&mut self.orders, &delta.orders_upserted, &delta.orders_removed, |o| o.tu_id);
        if let Some(c) = &delta.connections {
            self.connections = c.clone();
        }
        if let Some(s) = &delta.strategy {
            self.strategy = s.clone();
        }
        self.seq = delta.seq;
        self.revision = delta.revision;
        self.sim_time = delta.sim_time;
        Ok(())
    }

    pub fn module(&self, id: &str) -> Option<&ModuleView> {
        self.modules.iter().find(|m| m.module_id.as_str() == id)
    }

    pub fn route_for(&self, relation: &str) -> Option<&RouteView> {
        self.routes.iter().find(|r| r.relation_id.as_str() == relation)
    }

    /// Every route path module is listed among the modules.
    pub fn is_consistent(&self) -> bool {
        self.routes.iter().all(|r| r.path.iter().all(|m| self.modules.iter().any(|x| &x.module_id == m)))
    }
}
