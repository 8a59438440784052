use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{ModuleId, RelationId, RouteId};
use crate::routing::graph::{build_subgraph, feasible_subgraph, shortest_process_time_path, RoutePath};
use crate::routing::{LinkKey, OverrideViolation, RoutingError, Traversal, CAPACITY_EPS};
use crate::topology::Topology;

/// A demand stream from a source module to a sink module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFlowRelation {
    pub relation_id: RelationId,
    pub source: ModuleId,
    pub sink: ModuleId,
    /// TUs per minute.
    pub required_throughput: f64,
    /// Coefficient of variation of inter-arrival times.
    #[serde(default)]
    pub variability: f64,
    /// Higher is served first.
    #[serde(default)]
    pub priority: i32,
}

impl MaterialFlowRelation {
    pub fn new(
        id: impl Into<RelationId>,
        source: impl Into<ModuleId>,
        sink: impl Into<ModuleId>,
        throughput: f64,
    ) -> Self {
        MaterialFlowRelation {
            relation_id: id.into(),
            source: source.into(),
            sink: sink.into(),
            required_throughput: throughput,
            variability: 0.0,
            priority: 0,
        }
    }

    fn order_key(&self) -> (std::cmp::Reverse<i32>, RelationId) {
        (std::cmp::Reverse(self.priority), self.relation_id.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteStatus {
    Active,
    Revoked,
}

/// What one on-path module learns about a route.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSegment {
    pub module_id: ModuleId,
    pub predecessor: Option<ModuleId>,
    pub successor: Option<ModuleId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiStaticRoute {
    pub route_id: RouteId,
    pub relation_id: RelationId,
    pub hops: Vec<Traversal>,
    /// TUs per minute reserved on every link of the path.
    pub reserved_capacity: f64,
    /// Seconds from entering the source to leaving the sink.
    pub expected_process_time: f64,
    pub status: RouteStatus,
}

impl SemiStaticRoute {
    pub fn path(&self) -> Vec<ModuleId> {
        self.hops.iter().map(|h| h.module_id.clone()).collect()
    }

    pub fn contains(&self, module: &ModuleId) -> bool {
        self.hops.iter().any(|h| &h.module_id == module)
    }

    pub fn is_active(&self) -> bool {
        self.status == RouteStatus::Active
    }

    pub fn segments(&self) -> Vec<RouteSegment> {
        (0..self.hops.len())
            .map(|i| RouteSegment {
                module_id: self.hops[i].module_id.clone(),
                predecessor: i.checked_sub(1).map(|p| self.hops[p].module_id.clone()),
                successor: self.hops.get(i + 1).map(|h| h.module_id.clone()),
            })
            .collect()
    }

    pub fn segment(&self, module: &ModuleId) -> Option<RouteSegment> {
        self.segments().into_iter().find(|s| &s.module_id == module)
    }
}

/// What changed and why a renegotiation was started.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    LayoutChanged { hint: BTreeSet<ModuleId> },
    DemandChanged { relation_id: RelationId, new_throughput: f64 },
    OperatorOverride { route_id: RouteId, forced_path: Vec<ModuleId> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RenegotiationOutcome {
    pub revoked: Vec<RouteId>,
    pub installed: Vec<RouteId>,
    /// Relations left without a route, with the reason.
    pub unrouted: Vec<(RelationId, String)>,
}

/// All semi-static routes and the capacity they hold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteSet {
    routes: BTreeMap<RouteId, SemiStaticRoute>,
    relations: BTreeMap<RelationId, MaterialFlowRelation>,
    active: BTreeMap<RelationId, RouteId>,
    reserved: BTreeMap<LinkKey, f64>,
    next_route: u64,
    revision: u64,
    /// A demand drop below this fraction of the reservation triggers a reclaim.
    pub reclaim_fraction: f64,
}

impl Default for RouteSet {
    fn default() -> Self {
        RouteSet {
            routes: BTreeMap::new(),
            relations: BTreeMap::new(),
            active: BTreeMap::new(),
            reserved: BTreeMap::new(),
            next_route: 1,
            revision: 0,
            reclaim_fraction: 0.5,
        }
    }
}

impl RouteSet {
    pub fn new() -> Self {
        RouteSet::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn routes(&self) -> &BTreeMap<RouteId, SemiStaticRoute> {
        &self.routes
    }

    pub fn route(&self, id: &RouteId) -> Option<&SemiStaticRoute> {
        self.routes.get(id)
    }

    pub fn active_routes(&self) -> impl Iterator<Item = &SemiStaticRoute> {
        self.active.values().map(|id| &self.routes[id])
    }

    pub fn relations(&self) -> &BTreeMap<RelationId, MaterialFlowRelation> {
        &self.relations
    }

    pub fn relation(&self, id: &RelationId) -> Option<&MaterialFlowRelation> {
        self.relations.get(id)
    }

    /// The active route serving a relation.
    pub fn route_for(&self, relation: &RelationId) -> Option<&SemiStaticRoute> {
        self.active.get(relation).map(|id| &self.routes[id])
    }

    /// Known relations without an active route.
    pub fn unrouted(&self) -> impl Iterator<Item = &MaterialFlowRelation> {
        self.relations.values().filter(|r| !self.active.contains_key(&r.relation_id))
    }

    /// Sum of reservations of active routes on a link.
    pub fn reserved_on(&self, key: &LinkKey) -> f64 {
        self.reserved.get(key).copied().unwrap_or(0.0)
    }

    pub fn reserved(&self) -> &BTreeMap<LinkKey, f64> {
        &self.reserved
    }

    /// Capacity minus active reservations; zero for links that no longer exist.
    pub fn residual(&self, topology: &Topology, key: &LinkKey) -> f64 {
        link_capacity(topology, key).map_or(0.0, |cap| cap - self.reserved_on(key))
    }

    /// Residual capacity of every link of every module in the topology.
    pub fn residual_capacity(&self, topology: &Topology) -> BTreeMap<LinkKey, f64> {
        topology
            .modules()
            .iter()
            .flat_map(|(id, m)| {
                (0..m.descriptor.internal_links.len()).map(move |link| LinkKey { module_id: id.clone(), link })
            })
            .map(|key| {
                let r = self.residual(topology, &key);
                (key, r)
            })
            .collect()
    }

    /// Links whose reservations exceed capacity (empty when the set is safe).
    pub fn capacity_violations(&self, topology: &Topology) -> Vec<LinkKey> {
        self.reserved
            .iter()
            .filter(|(key, sum)| link_capacity(topology, key).is_some_and(|cap| **sum > cap + CAPACITY_EPS))
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Recomputes reservation sums from the active routes, in route-id order.
    fn rebuild(&mut self) {
        let mut reserved: BTreeMap<LinkKey, f64> = BTreeMap::new();
        for route in self.routes.values().filter(|r| r.is_active()) {
            for hop in &route.hops {
                *reserved.entry(hop.link_key()).or_insert(0.0) += route.reserved_capacity;
            }
        }
        self.reserved = reserved;
        self.revision += 1;
    }

    fn fresh_route_id(&mut self) -> RouteId {
        let id = RouteId::new(format!("ssr-{:04}", self.next_route));
        self.next_route += 1;
        id
    }

    fn validate_relation(topology: &Topology, relation: &MaterialFlowRelation) -> Result<(), RoutingError> {
        if !topology.contains(&relation.source) {
            return Err(RoutingError::SourceAbsent(relation.source.clone()));
        }
        if !topology.contains(&relation.sink) {
            return Err(RoutingError::SinkAbsent(relation.sink.clone()));
        }
        if !(relation.required_throughput.is_finite() && relation.required_throughput > 0.0) {
            return Err(RoutingError::InvalidRelation(
                relation.relation_id.clone(),
                "required_throughput must be > 0".into(),
            ));
        }
        if !(relation.variability.is_finite() && relation.variability >= 0.0) {
            return Err(RoutingError::InvalidRelation(relation.relation_id.clone(), "variability must be >= 0".into()));
        }
        Ok(())
    }

    /// Registers a relation without routing it.
    pub fn register_relation(&mut self, relation: MaterialFlowRelation) {
        self.relations.insert(relation.relation_id.clone(), relation);
    }

    /// Finds and reserves a path for one relation.
    pub fn negotiate_route(
        &mut self,
        topology: &Topology,
        relation: MaterialFlowRelation,
    ) -> Result<RouteId, RoutingError> {
        Self::validate_relation(topology, &relation)?;
        if self.active.contains_key(&relation.relation_id) {
            return Err(RoutingError::AlreadyRouted(relation.relation_id));
        }
        let subgraph = feasible_subgraph(topology, self, &relation);
        let path = shortest_process_time_path(&subgraph, &relation.source, &relation.sink);
        let id = relation.relation_id.clone();
        self.register_relation(relation.clone());
        let path = match path {
            Ok(Some(p)) => p,
            Ok(None) | Err(RoutingError::SourceAbsent(_)) | Err(RoutingError::SinkAbsent(_)) => {
                return Err(RoutingError::NoCapacityPath(id))
            }
            Err(e) => return Err(e),
        };
        if !self.fits(topology, &path.hops, relation.required_throughput) {
            return Err(RoutingError::NoCapacityPath(id));
        }
        Ok(self.install(&relation, path))
    }

    /// Whether `hops` fit, counting links used more than once.
    fn fits(&self, topology: &Topology, hops: &[Traversal], throughput: f64) -> bool {
        let mut demand: BTreeMap<LinkKey, f64> = BTreeMap::new();
        for h in hops {
            *demand.entry(h.link_key()).or_insert(0.0) += throughput;
        }
        demand.iter().all(|(k, d)| self.residual(topology, k) + CAPACITY_EPS >= *d)
    }

    fn install(&mut self, relation: &MaterialFlowRelation, path: RoutePath) -> RouteId {
        let route_id = self.fresh_route_id();
        let route = SemiStaticRoute {
            route_id: route_id.clone(),
            relation_id: relation.relation_id.clone(),
            expected_process_time: path.traversal_ms() as f64 / 1000.0,
            hops: path.hops,
            reserved_capacity: relation.required_throughput,
            status: RouteStatus::Active,
        };
        self.routes.insert(route_id.clone(), route);
        self.active.insert(relation.relation_id.clone(), route_id.clone());
        self.rebuild();
        route_id
    }

    /// Revokes an active route and releases its reservation.
    pub fn revoke(&mut self, route_id: &RouteId) -> Result<(), RoutingError> {
        let route = self.routes.get_mut(route_id).ok_or_else(|| RoutingError::UnknownRoute(route_id.clone()))?;
        if route.status == RouteStatus::Revoked {
            return Ok(());
        }
        route.status = RouteStatus::Revoked;
        let relation = route.relation_id.clone();
        self.active.remove(&relation);
        self.rebuild();
        Ok(())
    }

    /// Routes the given relations (or retries unrouted ones) in priority order.
    fn negotiate_in_order(
        &mut self,
        topology: &Topology,
        mut relations: Vec<MaterialFlowRelation>,
        outcome: &mut RenegotiationOutcome,
    ) {
        relations.sort_by_key(MaterialFlowRelation::order_key);
        relations.dedup_by(|a, b| a.relation_id == b.relation_id);
        for relation in relations {
            let id = relation.relation_id.clone();
            match self.negotiate_route(topology, relation) {
                Ok(route) => outcome.installed.push(route),
                Err(e) => outcome.unrouted.push((id, e.to_string())),
            }
        }
    }

    /// Revokes affected routes and places them again, highest priority first.
    pub fn renegotiate(&mut self, topology: &Topology, trigger: Trigger) -> Result<RenegotiationOutcome, RoutingError> {
        let mut outcome = RenegotiationOutcome::default();
        match trigger {
            Trigger::LayoutChanged { hint } => {
                let affected: Vec<RouteId> = self
                    .active_routes()
                    .filter(|r| {
                        r.hops.iter().any(|h| hint.contains(&h.module_id) || !topology.is_operational(&h.module_id))
                    })
                    .map(|r| r.route_id.clone())
                    .collect();
                for id in &affected {
                    self.revoke(id)?;
                }
                outcome.revoked = affected;
                let retry: Vec<MaterialFlowRelation> = self.unrouted().cloned().collect();
                self.negotiate_in_order(topology, retry, &mut outcome);
                if outcome.revoked.is_empty() && outcome.installed.is_empty() {
                    self.revision += 1;
                }
            }
            Trigger::DemandChanged { relation_id, new_throughput } => {
                let relation = self
                    .relations
                    .get_mut(&relation_id)
                    .ok_or_else(|| RoutingError::UnknownRelation(relation_id.clone()))?;
                if !(new_throughput.is_finite() && new_throughput > 0.0) {
                    return Err(RoutingError::InvalidRelation(relation_id, "required_throughput must be > 0".into()));
                }
                relation.required_throughput = new_throughput;
                let relation = relation.clone();
                let reclaim = self.reclaim_fraction;
                match self.active.get(&relation_id).cloned() {
                    Some(route_id) => {
                        let reserved = self.routes[&route_id].reserved_capacity;
                        if new_throughput > reserved + CAPACITY_EPS || new_throughput < reclaim * reserved {
                            self.revoke(&route_id)?;
                            outcome.revoked.push(route_id);
                            self.negotiate_in_order(topology, vec![relation], &mut outcome);
                        } else {
                            self.revision += 1;
                        }
                    }
                    None => self.negotiate_in_order(topology, vec![relation], &mut outcome),
                }
            }
            Trigger::OperatorOverride { route_id, forced_path } => {
                let route = self.routes.get(&route_id).ok_or_else(|| RoutingError::UnknownRoute(route_id.clone()))?;
                let relation = self.relations[&route.relation_id].clone();
                let hops =
                    resolve_forced_path(topology, &relation, &forced_path).map_err(RoutingError::OverrideRejected)?;
                let mut trial = self.clone();
                if let Some(current) = trial.active.get(&relation.relation_id).cloned() {
                    trial.revoke(&current)?;
                }
                let mut demand: BTreeMap<LinkKey, f64> = BTreeMap::new();
                for h in &hops {
                    *demand.entry(h.link_key()).or_insert(0.0) += relation.required_throughput;
                    if trial.residual(topology, &h.link_key()) + CAPACITY_EPS < demand[&h.link_key()] {
                        return Err(RoutingError::OverrideRejected(OverrideViolation::CapacityExceeded {
                            module_id: h.module_id.clone(),
                        }));
                    }
                }
                let cost_ms = hops.iter().rev().skip(1).map(|h| h.process_time_ms).sum();
                if let Some(current) = self.active.get(&relation.relation_id).cloned() {
                    self.revoke(&current)?;
                    outcome.revoked.push(current);
                }
                outcome.installed.push(self.install(&relation, RoutePath { hops, cost_ms }));
            }
        }
        Ok(outcome)
    }
}

fn link_capacity(topology: &Topology, key: &LinkKey) -> Option<f64> {
    topology.module(&key.module_id).and_then(|m| m.descriptor.internal_links.get(key.link)).map(|l| l.capacity)
}

/// Turns an operator's module sequence into concrete traversals.
fn resolve_forced_path(
    topology: &Topology,
    relation: &MaterialFlowRelation,
    forced: &[ModuleId],
) -> Result<Vec<Traversal>, OverrideViolation> {
    let (first, last) = match (forced.first(), forced.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(OverrideViolation::EmptyPath),
    };
    if first != &relation.source || last != &relation.sink {
        return Err(OverrideViolation::WrongEndpoints {
            expected_source: relation.source.clone(),
            expected_sink: relation.sink.clone(),
        });
    }
    let mut seen = BTreeSet::new();
    for m in forced {
        if !topology.contains(m) {
            return Err(OverrideViolation::UnknownModule { module_id: m.clone() });
        }
        if !topology.is_operational(m) {
            return Err(OverrideViolation::NotOperational { module_id: m.clone() });
        }
        if !seen.insert(m) {
            return Err(OverrideViolation::RevisitsModule { module_id: m.clone() });
        }
    }

    let position: BTreeMap<&ModuleId, usize> = forced.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut sub = build_subgraph(topology, |t| position.contains_key(&t.module_id));
    // Keep only arcs that step to the next module of the forced sequence.
    for (i, succ) in sub.arcs.iter_mut().enumerate() {
        let at = position[&sub.nodes[i].module_id];
        succ.retain(|&j| position[&sub.nodes[j].module_id] == at + 1);
    }
    match shortest_process_time_path(&sub, &relation.source, &relation.sink) {
        Ok(Some(p)) => Ok(p.hops),
        _ => {
            // Name the first pair of consecutive modules that cannot hand over.
            let reach = forward_reach(&sub, relation);
            let broken = (0..forced.len() - 1).find(|&k| !reach.contains(&forced[k + 1])).unwrap_or(0);
            Err(OverrideViolation::Disconnected {
                from: forced[broken].clone(),
                to: forced.get(broken + 1).cloned().unwrap_or_else(|| forced[broken].clone()),
            })
        }
    }
}

fn forward_reach(sub: &crate::routing::FeasibleSubgraph, relation: &MaterialFlowRelation) -> BTreeSet<ModuleId> {
    let mut seen = vec![false; sub.nodes.len()];
    let mut stack: Vec<usize> = sub.entries.get(&relation.source).cloned().unwrap_or_default();
    let mut modules = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        modules.insert(sub.nodes[n].module_id.clone());
        stack.extend(sub.arcs[n].iter().copied().filter(|&s| !seen[s]));
    }
    modules
}

/// Negotiates many relations in priority order (descending priority, then relation id).
pub fn negotiate_all(
    topology: &Topology,
    route_set: &mut RouteSet,
    relations: impl IntoIterator<Item = MaterialFlowRelation>,
) -> Vec<(RelationId, Result<RouteId, RoutingError>)> {
    let mut relations: Vec<_> = relations.into_iter().collect();
    relations.sort_by_key(MaterialFlowRelation::order_key);
    relations
        .into_iter()
        .map(|r| {
            let id = r.relation_id.clone();
            (id, route_set.negotiate_route(topology, r))
        })
        .collect()
}
