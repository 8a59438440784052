use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    elect_coordinator, handover, AgentMessage, AgentState, CoordinatorError, CoordinatorState, EventLog, LevelEffect,
    LinkInfo, LogEntry, Party, Payload, Performative, RegistrationPhase,
};
use crate::ids::{ModuleId, RelationId, RouteId, TuId};
use crate::model::{ModuleDescriptor, OperationalState};
use crate::routing::build_subgraph;
use crate::routing::{
    negotiate_all, release_schedule, schedule_transport, shortest_process_time_path, MaterialFlowRelation,
    RenegotiationOutcome, RouteSet, RoutingError, Schedule, ScheduleError, ScheduleOptions, Traversal, Trigger,
};
use crate::sim::arrivals::{stream_seed, ArrivalStream};
use crate::sim::metrics::{MetricsAccumulator, MetricsReport};
use crate::sim::scenario::{ModuleSetup, ReconfigEvent, ScenarioConfig, ScenarioError, Settings, Strategy};
use crate::time::{secs_to_millis, SimTime};
use crate::topology::{removed_status, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("layout: {0}")]
    Layout(#[from] TopologyError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("unknown module `{0}`")]
    UnknownModule(ModuleId),
    #[error("module `{0}` already exists")]
    DuplicateModule(ModuleId),
    #[error("unknown relation `{0}`")]
    UnknownRelation(RelationId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TuState {
    Waiting,
    Scheduled,
    InTransit {
        module_id: ModuleId,
    },
    Delivered {
        arrival: SimTime,
    },
    /// Waiting with no slot inside the scheduling horizon; retried every heartbeat.
    Blocked {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportUnit {
    pub tu_id: TuId,
    pub relation_id: RelationId,
    pub release_time: SimTime,
    pub state: TuState,
    pub route_id: Option<RouteId>,
    pub path: Vec<ModuleId>,
    pub scheduled_arrival: Option<SimTime>,
}

/// Delivery statistics of one route.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteStats {
    /// Delivery instants inside the trailing minute.
    pub recent: VecDeque<SimTime>,
    pub delivered: usize,
    pub total_duration_ms: u64,
}

impl RouteStats {
    /// Deliveries per minute over the last 60 s.
    pub fn moving_throughput(&self, now: SimTime) -> f64 {
        self.recent.iter().filter(|t| now.saturating_sub(**t) < 60_000).count() as f64
    }

    pub fn average_duration(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.total_duration_ms as f64 / self.delivered as f64 / 1000.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failover {
    pub failed: ModuleId,
    pub killed_at: SimTime,
    pub detected_by: ModuleId,
    pub elected_at: SimTime,
    pub successor: ModuleId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedRoute {
    pub route_id: RouteId,
    pub relation_id: RelationId,
    pub path: Vec<ModuleId>,
    pub reserved_capacity: f64,
    /// Seconds.
    pub expected_process_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnroutedRelation {
    pub relation_id: RelationId,
    pub reason: String,
}

/// The active route set in exportable form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub revision: u64,
    pub routes: Vec<PlannedRoute>,
    pub unrouted: Vec<UnroutedRelation>,
}

impl RoutePlan {
    pub fn from_routes(routes: &RouteSet, reasons: &BTreeMap<RelationId, String>) -> Self {
        RoutePlan {
            revision: routes.revision(),
            routes: routes
                .active_routes()
                .map(|r| PlannedRoute {
                    route_id: r.route_id.clone(),
                    relation_id: r.relation_id.clone(),
                    path: r.path(),
                    reserved_capacity: r.reserved_capacity,
                    expected_process_time: r.expected_process_time,
                })
                .collect(),
            unrouted: routes
                .unrouted()
                .map(|r| UnroutedRelation {
                    relation_id: r.relation_id.clone(),
                    reason: reasons.get(&r.relation_id).cloned().unwrap_or_else(|| "not negotiated".into()),
                })
                .collect(),
        }
    }

    pub fn route_for(&self, relation: &str) -> Option<&PlannedRoute> {
        self.routes.iter().find(|r| r.relation_id.as_str() == relation)
    }

    pub fn is_feasible(&self) -> bool {
        self.unrouted.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("route plan revision {}\n", self.revision);
        for r in &self.routes {
            let path: Vec<&str> = r.path.iter().map(|m| m.as_str()).collect();
            s.push_str(&format!(
                "{}  {}  {}  reserved {:.3} tu/min  expected {:.1} s\n",
                r.route_id,
                r.relation_id,
                path.join(" > "),
                r.reserved_capacity,
                r.expected_process_time
            ));
        }
        for u in &self.unrouted {
            s.push_str(&format!("unrouted  {}  {}\n", u.relation_id, u.reason));
        }
        s
    }
}

/// Negotiates the initial routes of a scenario without simulating it.
pub fn plan_routes(config: &ScenarioConfig) -> Result<RoutePlan, SimError> {
    config.validate()?;
    let placements: Vec<_> = config.modules.iter().map(|m| (m.descriptor.clone(), m.placement.clone())).collect();
    let topology = Topology::from_placements(&placements, &config.settings.tolerance)?;
    let mut routes = RouteSet::new();
    routes.reclaim_fraction = config.settings.reclaim_fraction;
    for r in &config.relations {
        routes.register_relation(r.clone());
    }
    let mut reasons = BTreeMap::new();
    for (id, result) in negotiate_all(&topology, &mut routes, config.relations.clone()) {
        if let Err(e) = result {
            reasons.insert(id, e.to_string());
        }
    }
    Ok(RoutePlan::from_routes(&routes, &reasons))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub released: usize,
    pub delivered: usize,
    /// Scheduled or moving at the end of the run.
    pub in_flight: usize,
    /// Never scheduled (waiting or blocked).
    pub waiting: usize,
    pub diagnostics: usize,
    pub failovers: Vec<Failover>,
    pub end_time: SimTime,
}

impl RunSummary {
    /// Every released TU is accounted for exactly once.
    pub fn conserves_tus(&self) -> bool {
        self.released == self.delivered + self.in_flight + self.waiting
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: MetricsReport,
    pub log: EventLog,
    pub plan: RoutePlan,
    pub summary: RunSummary,
}

/// Runs a scenario to completion: startup, arrivals until the horizon, then drain.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(config)?;
    sim.run_to_end();
    Ok(sim.finish())
}

#[derive(Clone, Debug)]
enum Event {
    Exit(TuId),
    Enter(TuId, usize),
    Deliver(Box<AgentMessage>),
    Script(usize),
    Arrival(RelationId, u64),
    Heartbeat,
    DrainCheck(ModuleId),
}

impl Event {
    /// Same-instant order: TUs leave before others enter, messages before new work.
    fn class(&self) -> u8 {
        match self {
            Event::Exit(_) => 0,
            Event::Enter(..) => 1,
            Event::Deliver(_) => 2,
            Event::Script(_) => 3,
            Event::Arrival(..) => 4,
            Event::Heartbeat => 5,
            Event::DrainCheck(_) => 6,
        }
    }

    fn key(&self) -> u64 {
        match self {
            Event::Exit(tu) | Event::Enter(tu, _) => tu.0,
            Event::Deliver(m) => m.message_id,
            Event::Script(i) => *i as u64,
            _ => 0,
        }
    }
}

#[derive(Debug)]
struct Queued {
    t: SimTime,
    class: u8,
    key: u64,
    seq: u64,
    event: Event,
}

impl Queued {
    fn order(&self) -> (SimTime, u8, u64, u64) {
        (self.t, self.class, self.key, self.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order()
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order().cmp(&other.order())
    }
}

#[derive(Clone, Debug)]
struct RelationState {
    arrivals: ArrivalStream,
    generation: u64,
    waiting: VecDeque<TuId>,
    /// Scheduled but not yet entered; the next TU waits for it.
    pending_head: Option<TuId>,
    last_sink: Option<SimTime>,
}

/// A steppable simulation of one scenario.
pub struct Simulation {
    name: String,
    settings: Settings,
    horizon: SimTime,
    now: SimTime,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    next_msg: u64,
    next_tu: u64,
    coord: CoordinatorState,
    failed_hosts: BTreeSet<ModuleId>,
    crashed: Option<(ModuleId, SimTime)>,
    agents: BTreeMap<ModuleId, AgentState>,
    setups: BTreeMap<ModuleId, ModuleSetup>,
    startup_pending: BTreeSet<ModuleId>,
    routes_ready: bool,
    leaving: BTreeSet<ModuleId>,
    relations: BTreeMap<RelationId, RelationState>,
    relation_order: Vec<RelationId>,
    tus: BTreeMap<TuId, TransportUnit>,
    schedules: BTreeMap<TuId, Schedule>,
    static_paths: BTreeMap<RelationId, Vec<Traversal>>,
    unrouted_reasons: BTreeMap<RelationId, String>,
    strategy: Strategy,
    script: Vec<ReconfigEvent>,
    held_messages: Vec<AgentMessage>,
    deferred: VecDeque<ReconfigEvent>,
    choice_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    log: EventLog,
    metrics: MetricsAccumulator,
    route_stats: BTreeMap<RouteId, RouteStats>,
    failovers: Vec<Failover>,
    diagnostics: usize,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let placements: Vec<_> = config.modules.iter().map(|m| (m.descriptor.clone(), m.placement.clone())).collect();
        Topology::from_placements(&placements, &config.settings.tolerance)?;

        let mut coord = CoordinatorState::new(config.settings.tolerance);
        coord.routes.reclaim_fraction = config.settings.reclaim_fraction;
        let relations = config
            .relations
            .iter()
            .map(|r| {
                let state = RelationState {
                    arrivals: ArrivalStream::new(r, config.seed),
                    generation: 0,
                    waiting: VecDeque::new(),
                    pending_head: None,
                    last_sink: None,
                };
                (r.relation_id.clone(), state)
            })
            .collect();
        let mut order: Vec<&MaterialFlowRelation> = config.relations.iter().collect();
        order.sort_by_key(|r| (Reverse(r.priority), r.relation_id.clone()));

        let mut sim = Simulation {
            name: config.name.clone(),
            settings: config.settings.clone(),
            horizon: config.horizon(),
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            next_msg: 1,
            next_tu: 1,
            coord,
            failed_hosts: BTreeSet::new(),
            crashed: None,
            agents: BTreeMap::new(),
            setups: BTreeMap::new(),
            startup_pending: BTreeSet::new(),
            routes_ready: false,
            leaving: BTreeSet::new(),
            relations,
            relation_order: order.iter().map(|r| r.relation_id.clone()).collect(),
            tus: BTreeMap::new(),
            schedules: BTreeMap::new(),
            static_paths: BTreeMap::new(),
            unrouted_reasons: BTreeMap::new(),
            strategy: config.strategy,
            script: config.script.iter().map(|e| e.event.clone()).collect(),
            held_messages: Vec::new(),
            deferred: VecDeque::new(),
            choice_rng: ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "#choice")),
            loss_rng: ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "#loss")),
            log: EventLog::new(),
            metrics: MetricsAccumulator::new(),
            route_stats: BTreeMap::new(),
            failovers: Vec::new(),
            diagnostics: 0,
        };
        for r in &config.relations {
            sim.coord.routes.register_relation(r.clone());
        }

        sim.record(LogEntry::Header {
            scenario: config.name.clone(),
            seed: config.seed,
            strategy: config.strategy.to_string(),
            horizon_ms: config.horizon_ms,
            modules: config
                .modules
                .iter()
                .map(|m| (m.placement.module_id.clone(), LinkInfo::of(&m.descriptor)))
                .collect(),
            relations: config.relations.iter().map(|r| r.relation_id.clone()).collect(),
        });

        // Startup: the smallest id hosts the coordinator, then everyone registers.
        let ids: BTreeSet<ModuleId> = config.modules.iter().map(|m| m.placement.module_id.clone()).collect();
        if let Ok(host) = elect_coordinator(&ids, None) {
            sim.coord.host = Some(host.clone());
            sim.record(LogEntry::CoordinatorElected { module_id: host });
        }
        for setup in &config.modules {
            sim.startup_pending.insert(setup.placement.module_id.clone());
            sim.join(setup.clone());
        }
        if sim.startup_pending.is_empty() {
            sim.complete_startup();
        }

        let firsts: Vec<(RelationId, SimTime)> =
            sim.relations.iter().map(|(id, st)| (id.clone(), st.arrivals.peek())).collect();
        for (id, t) in firsts {
            if t < sim.horizon {
                sim.push(t, Event::Arrival(id, 0));
            }
        }
        for (i, e) in config.script.iter().enumerate() {
            sim.push(e.at, Event::Script(i));
        }
        sim.push(SimTime::ZERO, Event::Heartbeat);
        Ok(sim)
    }

    // ---- accessors ----

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn coordinator(&self) -> &CoordinatorState {
        &self.coord
    }

    pub fn topology(&self) -> &Topology {
        &self.coord.topology
    }

    pub fn routes(&self) -> &RouteSet {
        &self.coord.routes
    }

    pub fn agents(&self) -> &BTreeMap<ModuleId, AgentState> {
        &self.agents
    }

    pub fn tus(&self) -> &BTreeMap<TuId, TransportUnit> {
        &self.tus
    }

    pub fn schedule_of(&self, tu: TuId) -> Option<&Schedule> {
        self.schedules.get(&tu)
    }

    pub fn route_stats(&self, route: &RouteId) -> Option<&RouteStats> {
        self.route_stats.get(route)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn failovers(&self) -> &[Failover] {
        &self.failovers
    }

    pub fn is_leaving(&self, module: &ModuleId) -> bool {
        self.leaving.contains(module)
    }

    pub fn route_plan(&self) -> RoutePlan {
        RoutePlan::from_routes(&self.coord.routes, &self.unrouted_reasons)
    }

    /// Metrics accumulated so far, over the horizon.
    pub fn metrics(&self) -> MetricsReport {
        self.metrics.report(self.horizon)
    }

    pub fn is_finished(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.t)
    }

    // ---- stepping ----

    /// Processes one event. Returns `false` once nothing is left.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(q)) = self.queue.pop() else {
            return false;
        };
        self.now = q.t;
        match q.event {
            Event::Exit(tu) => self.on_exit(tu),
            Event::Enter(tu, hop) => self.on_enter(tu, hop),
            Event::Deliver(msg) => self.deliver(*msg),
            Event::Script(i) => {
                let event = self.script[i].clone();
                if let Err(e) = self.execute_reconfiguration(event) {
                    self.diagnostic("script", format!("reconfiguration rejected: {e}"));
                }
            }
            Event::Arrival(rid, generation) => self.on_arrival(rid, generation),
            Event::Heartbeat => self.on_heartbeat(),
            Event::DrainCheck(m) => self.on_drain_check(m),
        }
        true
    }

    /// Processes every event up to and including `t`, then sets the clock to `t`.
    pub fn step_until(&mut self, t: SimTime) {
        while self.next_event_time().is_some_and(|n| n <= t) {
            self.step();
        }
        self.now = self.now.max(t);
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    pub fn finish(self) -> RunOutput {
        let count = |f: fn(&TuState) -> bool| self.tus.values().filter(|t| f(&t.state)).count();
        let summary = RunSummary {
            released: self.tus.len(),
            delivered: count(|s| matches!(s, TuState::Delivered { .. })),
            in_flight: count(|s| matches!(s, TuState::Scheduled | TuState::InTransit { .. })),
            waiting: count(|s| matches!(s, TuState::Waiting | TuState::Blocked { .. })),
            diagnostics: self.diagnostics,
            failovers: self.failovers.clone(),
            end_time: self.now,
        };
        RunOutput { metrics: self.metrics.report(self.horizon), plan: self.route_plan(), log: self.log, summary }
    }

    // ---- plumbing ----

    fn push(&mut self, t: SimTime, event: Event) {
        self.seq += 1;
        let q = Queued { t, class: event.class(), key: event.key(), seq: self.seq, event };
        self.queue.push(Reverse(q));
    }

    fn record(&mut self, entry: LogEntry) {
        self.log.push(self.now, entry);
        let last = self.log.records().last().expect("just pushed");
        // The engine only writes consistent logs.
        let _ = self.metrics.observe(last);
    }

    fn diagnostic(&mut self, agent: impl Into<String>, message: impl Into<String>) {
        self.diagnostics += 1;
        self.record(LogEntry::Diagnostic { agent: agent.into(), message: message.into() });
    }

    fn message_id(&mut self) -> u64 {
        let id = self.next_msg;
        self.next_msg += 1;
        id
    }

    fn send(&mut self, msg: AgentMessage) {
        self.record(LogEntry::message(&msg));
        let at = self.now + self.settings.planning_latency_ms;
        self.push(at, Event::Deliver(Box::new(msg)));
    }

    fn send_new(
        &mut self,
        sender: Party,
        receiver: Party,
        performative: Performative,
        conversation: String,
        payload: Payload,
    ) {
        let id = self.message_id();
        let msg = AgentMessage::new(id, self.now, sender, receiver, performative, conversation, payload);
        self.send(msg);
    }

    fn lost(&mut self, msg: &AgentMessage) -> bool {
        matches!(msg.payload, Payload::StatusReport { .. })
            && self.settings.status_loss_rate > 0.0
            && self.loss_rng.random::<f64>() < self.settings.status_loss_rate
    }

    fn log_effects(&mut self, module: &ModuleId) {
        let Some(agent) = self.agents.get_mut(module) else {
            return;
        };
        for effect in agent.take_effects() {
            let module_id = module.clone();
            let entry = match effect {
                LevelEffect::SequenceQueued { tu_id, sequence } => {
                    LogEntry::SequenceQueued { module_id, tu_id, steps: sequence.steps.len() }
                }
                LevelEffect::SequenceDone { tu_id } => LogEntry::SequenceDone { module_id, tu_id },
                LevelEffect::ActuatorOn { actuator_id, tu_id, direction } => {
                    LogEntry::ActuatorOn { module_id, actuator_id, tu_id, direction }
                }
                LevelEffect::ActuatorOff { actuator_id, tu_id } => {
                    LogEntry::ActuatorOff { module_id, actuator_id, tu_id }
                }
            };
            self.record(entry);
        }
    }

    fn coordinator_up(&self) -> bool {
        self.coord.is_active()
    }

    // ---- messaging ----

    fn deliver(&mut self, msg: AgentMessage) {
        match msg.receiver.clone() {
            Party::Coordinator => {
                if !self.coordinator_up() {
                    if matches!(msg.payload, Payload::Registration { .. }) {
                        self.held_messages.push(msg);
                    }
                    return;
                }
                self.coordinator_handle(msg);
            }
            Party::Module(m) => {
                if !self.lost(&msg) {
                    self.agent_handle(&m, &msg);
                }
            }
            Party::Broadcast => {
                let ids: Vec<ModuleId> = self.agents.keys().cloned().collect();
                for m in ids {
                    if !self.lost(&msg) {
                        self.agent_handle(&m, &msg);
                    }
                }
            }
        }
    }

    fn agent_handle(&mut self, module: &ModuleId, msg: &AgentMessage) {
        let mut next = self.next_msg;
        let Some(agent) = self.agents.get_mut(module) else {
            return;
        };
        let result = agent.dispatch(msg, self.now, &mut next);
        self.next_msg = next;
        match result {
            Ok(replies) => {
                for r in replies {
                    self.send(r);
                }
            }
            Err(e) => self.diagnostic(module.as_str(), e.to_string()),
        }
        self.log_effects(module);
    }

    fn coordinator_handle(&mut self, msg: AgentMessage) {
        match (&msg.payload, msg.performative) {
            (Payload::Registration { module_id, .. }, Performative::Request) => {
                let module_id = module_id.clone();
                self.register(&msg, module_id);
            }
            (Payload::ReservationRequest { tu_id, .. }, Performative::Refuse) => {
                let who = msg.sender.to_string();
                self.diagnostic(who, format!("reservation for {tu_id} refused"));
            }
            (Payload::RouteProposal { route_id, .. }, Performative::Refuse) => {
                let who = msg.sender.to_string();
                self.diagnostic(who, format!("route proposal {route_id} refused"));
            }
            _ => {}
        }
    }

    fn register(&mut self, request: &AgentMessage, module_id: ModuleId) {
        let Some(setup) = self.setups.get(&module_id).cloned() else {
            return;
        };
        let result = self.coord.register_module(
            setup.descriptor.clone(),
            setup.placement.clone(),
            setup.descriptor_ref.clone(),
            self.now,
        );
        let id = self.message_id();
        match result {
            Ok(hint) => {
                let reply =
                    request.reply(id, self.now, Party::Coordinator, Performative::Agree, request.payload.clone());
                self.send(reply);
                self.record(LogEntry::ModuleAdded {
                    module_id: module_id.clone(),
                    links: LinkInfo::of(&setup.descriptor),
                });
                self.broadcast_topology();
                if self.startup_pending.remove(&module_id) {
                    if self.startup_pending.is_empty() {
                        self.complete_startup();
                    }
                } else if self.routes_ready {
                    self.renegotiate(Trigger::LayoutChanged { hint });
                    self.refresh_static_paths();
                    self.dispatch_all();
                }
            }
            Err(e) => {
                let reply =
                    request.reply(id, self.now, Party::Coordinator, Performative::Refuse, request.payload.clone());
                self.send(reply);
                self.startup_pending.remove(&module_id);
                self.agents.remove(&module_id);
                self.diagnostic("coordinator", format!("registration of `{module_id}` refused: {e}"));
                if self.startup_pending.is_empty() && !self.routes_ready {
                    self.complete_startup();
                }
            }
        }
    }

    fn broadcast_topology(&mut self) {
        let payload = Payload::TopologyUpdate {
            revision: self.coord.topology.revision(),
            modules: self.coord.topology.modules().len(),
            connections: self.coord.topology.connections().len(),
        };
        let conv = format!("topology-{}", self.coord.topology.revision());
        self.send_new(Party::Coordinator, Party::Broadcast, Performative::Inform, conv, payload);
    }

    fn complete_startup(&mut self) {
        let relations: Vec<MaterialFlowRelation> = self.coord.routes.relations().values().cloned().collect();
        let results = negotiate_all(&self.coord.topology, &mut self.coord.routes, relations);
        let mut outcome = RenegotiationOutcome::default();
        for (id, r) in results {
            match r {
                Ok(route) => outcome.installed.push(route),
                Err(e) => outcome.unrouted.push((id, e.to_string())),
            }
        }
        self.publish(outcome);
        self.routes_ready = true;
        self.refresh_static_paths();
        self.dispatch_all();
    }

    fn renegotiate(&mut self, trigger: Trigger) {
        match self.coord.routes.renegotiate(&self.coord.topology, trigger) {
            Ok(outcome) => self.publish(outcome),
            Err(e) => self.diagnostic("coordinator", format!("renegotiation failed: {e}")),
        }
    }

    /// Logs a renegotiation result and informs on-path modules of new routes.
    fn publish(&mut self, outcome: RenegotiationOutcome) {
        for id in &outcome.revoked {
            let relation_id = self.coord.routes.route(id).map(|r| r.relation_id.clone()).unwrap_or_else(|| "?".into());
            self.record(LogEntry::RouteRevoked { route_id: id.clone(), relation_id });
        }
        for id in &outcome.installed {
            let route = self.coord.routes.route(id).expect("installed route exists").clone();
            self.unrouted_reasons.remove(&route.relation_id);
            self.record(LogEntry::RouteInstalled {
                route_id: route.route_id.clone(),
                relation_id: route.relation_id.clone(),
                path: route.path(),
                reserved_capacity: route.reserved_capacity,
                expected_process_time: route.expected_process_time,
            });
            for segment in route.segments() {
                let payload = Payload::RouteProposal {
                    route_id: route.route_id.clone(),
                    relation_id: route.relation_id.clone(),
                    segment: segment.clone(),
                    reserved_capacity: route.reserved_capacity,
                };
                self.send_new(
                    Party::Coordinator,
                    Party::Module(segment.module_id),
                    Performative::Inform,
                    format!("route-{}", route.route_id),
                    payload,
                );
            }
        }
        for (relation_id, reason) in outcome.unrouted {
            self.unrouted_reasons.insert(relation_id.clone(), reason.clone());
            self.record(LogEntry::RelationUnrouted { relation_id, reason });
        }
    }

    fn refresh_static_paths(&mut self) {
        let sub = build_subgraph(&self.coord.topology, |_| true);
        self.static_paths.clear();
        for r in self.coord.routes.relations().values() {
            if let Ok(Some(p)) = shortest_process_time_path(&sub, &r.source, &r.sink) {
                self.static_paths.insert(r.relation_id.clone(), p.hops);
            }
        }
    }

    /// Creates the agent of a module and starts its registration.
    fn join(&mut self, setup: ModuleSetup) {
        let id = setup.placement.module_id.clone();
        let mut agent = AgentState::new(setup.descriptor.clone());
        agent.configuration.coordinator_beat = Some(self.now);
        let msg_id = self.message_id();
        let request = agent.request_registration(msg_id, self.now, setup.placement.clone());
        self.agents.insert(id.clone(), agent);
        self.setups.insert(id, setup);
        self.send(request);
    }

    // ---- TU flow ----

    fn on_arrival(&mut self, rid: RelationId, generation: u64) {
        let Some(st) = self.relations.get_mut(&rid) else {
            return;
        };
        if st.generation != generation || self.now >= self.horizon {
            return;
        }
        st.arrivals.next_release();
        let next = st.arrivals.peek();
        let tu = TuId(self.next_tu);
        self.next_tu += 1;
        st.waiting.push_back(tu);
        self.tus.insert(
            tu,
            TransportUnit {
                tu_id: tu,
                relation_id: rid.clone(),
                release_time: self.now,
                state: TuState::Waiting,
                route_id: None,
                path: Vec::new(),
                scheduled_arrival: None,
            },
        );
        self.record(LogEntry::Released { tu_id: tu, relation_id: rid.clone() });
        if next < self.horizon {
            self.push(next, Event::Arrival(rid.clone(), generation));
        }
        self.dispatch_relation(&rid);
    }

    fn can_plan(&self) -> bool {
        self.routes_ready && self.coordinator_up() && self.now < self.horizon
    }

    fn dispatch_all(&mut self) {
        for rid in self.relation_order.clone() {
            self.dispatch_relation(&rid);
        }
    }

    /// Picks the hops for the next TU of a relation under the active strategy.
    fn hops_for(&mut self, rid: &RelationId) -> Option<(Vec<Traversal>, Option<RouteId>)> {
        match self.strategy {
            Strategy::Ssr => self.coord.routes.route_for(rid).map(|r| (r.hops.clone(), Some(r.route_id.clone()))),
            Strategy::StaticFixed => self.static_paths.get(rid).map(|h| (h.clone(), None)),
            Strategy::BaselineOccupancy => {
                let relation = self.coord.routes.relation(rid)?.clone();
                self.occupancy_path(&relation).map(|h| (h, None))
            }
        }
    }

    fn dispatch_relation(&mut self, rid: &RelationId) {
        if !self.can_plan() {
            return;
        }
        let Some(st) = self.relations.get(rid) else {
            return;
        };
        if st.pending_head.is_some() {
            return;
        }
        let Some(&tu) = st.waiting.front() else {
            return;
        };
        let last_sink = st.last_sink;
        let Some((hops, route_id)) = self.hops_for(rid) else {
            return;
        };
        let earliest = self.now + 2 * self.settings.planning_latency_ms;
        let opts = ScheduleOptions {
            horizon_ms: secs_to_millis(self.settings.scheduling_horizon),
            min_sink_arrival: last_sink.map_or(SimTime::ZERO, |t| t + 1),
        };
        match schedule_transport(&hops, tu, earliest, &mut self.coord.tables, &opts) {
            Ok(schedule) => self.commit(rid, tu, &hops, route_id, earliest, schedule),
            Err(ScheduleError::HorizonExceeded { earliest, .. }) => {
                let unit = self.tus.get_mut(&tu).expect("waiting TUs are tracked");
                if !matches!(unit.state, TuState::Blocked { .. }) {
                    let reason = format!("no slot within the scheduling horizon (next candidate {earliest})");
                    unit.state = TuState::Blocked { reason: reason.clone() };
                    self.record(LogEntry::Blocked { tu_id: tu, relation_id: rid.clone(), reason });
                }
            }
            Err(e) => self.diagnostic("coordinator", format!("cannot schedule {tu}: {e}")),
        }
    }

    fn commit(
        &mut self,
        rid: &RelationId,
        tu: TuId,
        hops: &[Traversal],
        route_id: Option<RouteId>,
        earliest: SimTime,
        schedule: Schedule,
    ) {
        let st = self.relations.get_mut(rid).expect("relation exists");
        st.waiting.pop_front();
        st.pending_head = Some(tu);
        st.last_sink = Some(schedule.sink_arrival());
        let path: Vec<ModuleId> = schedule.slots.iter().map(|s| s.module_id.clone()).collect();
        let unit = self.tus.get_mut(&tu).expect("tracked");
        unit.state = TuState::Scheduled;
        unit.route_id = route_id.clone();
        unit.path = path.clone();
        unit.scheduled_arrival = Some(schedule.sink_arrival());
        self.record(LogEntry::Scheduled {
            tu_id: tu,
            relation_id: rid.clone(),
            route_id,
            earliest,
            start: schedule.start(),
            sink_arrival: schedule.sink_arrival(),
            path,
        });
        for (slot, hop) in schedule.slots.iter().zip(hops) {
            let payload = Payload::ReservationRequest {
                tu_id: tu,
                relation_id: rid.clone(),
                slot: slot.clone(),
                reversible: hop.reversible,
                concurrent_tus: hop.concurrent_tus,
            };
            self.send_new(
                Party::Coordinator,
                Party::Module(slot.module_id.clone()),
                Performative::Request,
                format!("reserve-{}", tu.0),
                payload,
            );
        }
        for (i, slot) in schedule.slots.iter().enumerate() {
            self.push(slot.start, Event::Enter(tu, i));
        }
        self.push(schedule.sink_arrival(), Event::Exit(tu));
        self.schedules.insert(tu, schedule);
    }

    fn on_enter(&mut self, tu: TuId, hop: usize) {
        let Some(schedule) = self.schedules.get(&tu) else {
            return;
        };
        let slot = schedule.slots[hop].clone();
        let prev = hop.checked_sub(1).map(|p| schedule.slots[p].clone());
        let module = slot.module_id.clone();
        match prev {
            None => {
                let admitted = self.agents.get_mut(&module).map(|a| a.admit(tu, self.now));
                match admitted {
                    Some(Ok(())) => {}
                    Some(Err(e)) => self.diagnostic(module.as_str(), format!("admission failed: {e}")),
                    None => self.diagnostic(module.as_str(), format!("{tu} entered a module without agent")),
                }
                self.log_effects(&module);
                let rid = self.tus[&tu].relation_id.clone();
                if let Some(st) = self.relations.get_mut(&rid) {
                    if st.pending_head == Some(tu) {
                        st.pending_head = None;
                    }
                }
                self.record(LogEntry::Entered {
                    tu_id: tu,
                    module_id: module.clone(),
                    link: slot.link,
                    forward: slot.forward,
                });
                self.tus.get_mut(&tu).expect("tracked").state = TuState::InTransit { module_id: module };
                self.dispatch_relation(&rid);
            }
            Some(prev) => {
                let from = prev.module_id.clone();
                match (self.agents.remove(&module), self.agents.contains_key(&from)) {
                    (Some(mut receiver), true) => {
                        let sender = self.agents.get_mut(&from).expect("checked");
                        let mut next = self.next_msg;
                        let result = handover(sender, &mut receiver, tu, self.now, &self.coord.topology, &mut next);
                        self.next_msg = next;
                        self.agents.insert(module.clone(), receiver);
                        match result {
                            Ok((_, messages)) => {
                                for m in &messages {
                                    self.record(LogEntry::message(m));
                                }
                            }
                            Err(e) => {
                                self.diagnostic(module.as_str(), format!("handover of {tu} from `{from}` failed: {e}"));
                                if let Some(a) = self.agents.get_mut(&from) {
                                    a.release(tu);
                                }
                            }
                        }
                    }
                    (receiver, _) => {
                        if let Some(r) = receiver {
                            self.agents.insert(module.clone(), r);
                        }
                        self.diagnostic(module.as_str(), format!("handover of {tu} from `{from}` without both agents"));
                    }
                }
                self.log_effects(&from);
                self.log_effects(&module);
                self.record(LogEntry::Left { tu_id: tu, module_id: from, link: prev.link, forward: prev.forward });
                self.record(LogEntry::Entered {
                    tu_id: tu,
                    module_id: module.clone(),
                    link: slot.link,
                    forward: slot.forward,
                });
                self.tus.get_mut(&tu).expect("tracked").state = TuState::InTransit { module_id: module };
            }
        }
    }

    fn on_exit(&mut self, tu: TuId) {
        let Some(schedule) = self.schedules.remove(&tu) else {
            return;
        };
        let last = schedule.slots.last().expect("schedules are nonempty").clone();
        if let Some(agent) = self.agents.get_mut(&last.module_id) {
            agent.release(tu);
        }
        self.log_effects(&last.module_id);
        let _ = release_schedule(&mut self.coord.tables, tu);
        let unit = self.tus.get_mut(&tu).expect("tracked");
        unit.state = TuState::Delivered { arrival: self.now };
        let (rid, released, route) = (unit.relation_id.clone(), unit.release_time, unit.route_id.clone());
        self.record(LogEntry::Left {
            tu_id: tu,
            module_id: last.module_id.clone(),
            link: last.link,
            forward: last.forward,
        });
        self.record(LogEntry::Delivered { tu_id: tu, relation_id: rid, released_at: released });
        if let Some(route) = route {
            let now = self.now;
            let stats = self.route_stats.entry(route).or_default();
            stats.delivered += 1;
            stats.total_duration_ms += now - released;
            stats.recent.push_back(now);
            while stats.recent.front().is_some_and(|t| now.saturating_sub(*t) >= 60_000) {
                stats.recent.pop_front();
            }
        }
    }

    /// Greedy baseline: at every step, among traversals that bring the TU strictly closer to the
    /// sink, take the one whose module (plus its best next module) carries the fewest TUs now.
    fn occupancy_path(&mut self, relation: &MaterialFlowRelation) -> Option<Vec<Traversal>> {
        if relation.source == relation.sink {
            return self.static_paths.get(&relation.relation_id).cloned();
        }
        let sub = build_subgraph(&self.coord.topology, |_| true);
        let targets: BTreeSet<usize> = sub.exits.get(&relation.sink)?.iter().copied().collect();
        let n = sub.nodes.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, succ) in sub.arcs.iter().enumerate() {
            for &j in succ {
                preds[j].push(i);
            }
        }
        // Remaining time to leave the sink, counting the node itself.
        let mut dist: Vec<Option<u64>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        for &t in &targets {
            dist[t] = Some(sub.nodes[t].process_time_ms);
            heap.push(Reverse((sub.nodes[t].process_time_ms, t)));
        }
        while let Some(Reverse((d, v))) = heap.pop() {
            if dist[v] != Some(d) {
                continue;
            }
            for &p in &preds[v] {
                let nd = d + sub.nodes[p].process_time_ms;
                if dist[p].is_none_or(|x| nd < x) {
                    dist[p] = Some(nd);
                    heap.push(Reverse((nd, p)));
                }
            }
        }
        let now = self.now;
        let occupancy = |m: &ModuleId| -> usize {
            self.coord.tables.table(m).map_or(0, |t| t.entries().iter().filter(|e| e.end > now).count())
        };
        let progress = |c: usize| -> Vec<usize> {
            sub.arcs[c].iter().copied().filter(|&s| dist[s].is_some_and(|ds| ds < dist[c].unwrap_or(0))).collect()
        };
        let score = |c: usize| -> usize {
            let own = occupancy(&sub.nodes[c].module_id);
            if targets.contains(&c) {
                return own;
            }
            own + progress(c).iter().map(|&s| occupancy(&sub.nodes[s].module_id)).min().unwrap_or(0)
        };
        let mut candidates: Vec<usize> =
            sub.entries.get(&relation.source)?.iter().copied().filter(|&c| dist[c].is_some()).collect();
        let mut path = Vec::new();
        while !candidates.is_empty() && path.len() <= n {
            let scored: Vec<(usize, usize)> = candidates.iter().map(|&c| (score(c), c)).collect();
            let best = scored.iter().map(|(s, _)| *s).min().expect("nonempty");
            let ties: Vec<usize> = scored.iter().filter(|(s, _)| *s == best).map(|(_, c)| *c).collect();
            let pick = if ties.len() == 1 { ties[0] } else { ties[self.choice_rng.random_range(0..ties.len())] };
            path.push(sub.nodes[pick].clone());
            if targets.contains(&pick) {
                return Some(path);
            }
            candidates = progress(pick);
        }
        None
    }

    // ---- heartbeats and failover ----

    fn on_heartbeat(&mut self) {
        let period = self.settings.heartbeat_ms;
        if let Some(host) = self.coord.host.clone() {
            let payload = Payload::StatusReport {
                module_id: host,
                operational_state: OperationalState::Operational,
                workload: 0.0,
                sent_at: self.now,
            };
            self.send_new(Party::Coordinator, Party::Broadcast, Performative::Inform, "heartbeat".into(), payload);
        }
        let reports: Vec<(ModuleId, OperationalState, f64)> = self
            .agents
            .iter()
            .filter(|(_, a)| a.configuration.phase == RegistrationPhase::Registered)
            .map(|(id, a)| {
                let state = self
                    .coord
                    .topology
                    .module(id)
                    .map_or(OperationalState::Operational, |m| m.status.operational_state);
                (id.clone(), state, a.workload())
            })
            .collect();
        for (id, operational_state, workload) in reports {
            let payload =
                Payload::StatusReport { module_id: id.clone(), operational_state, workload, sent_at: self.now };
            self.send_new(
                Party::Module(id.clone()),
                Party::Coordinator,
                Performative::Inform,
                format!("status-{id}"),
                payload,
            );
        }
        self.check_coordinator();
        self.dispatch_all();
        if self.now + period <= self.horizon {
            self.push(self.now + period, Event::Heartbeat);
        }
    }

    fn check_coordinator(&mut self) {
        let limit = self.settings.heartbeat_ms * u64::from(self.settings.missed_heartbeats);
        let now = self.now;
        let suspects: Vec<ModuleId> = self
            .agents
            .iter()
            .filter(|(id, _)| !self.leaving.contains(*id))
            .filter(|(_, a)| a.configuration.coordinator_beat.is_some_and(|b| now.saturating_sub(b) >= limit))
            .map(|(id, _)| id.clone())
            .collect();
        for s in suspects {
            if self.coord.host.is_some() {
                self.diagnostic(s.as_str(), "coordinator heartbeats missed while the host is alive; suspicion dropped");
                if let Some(a) = self.agents.get_mut(&s) {
                    a.configuration.coordinator_beat = Some(now);
                }
            } else if self.crashed.is_some() {
                self.failover(s);
                return;
            }
        }
    }

    fn failover(&mut self, detected_by: ModuleId) {
        let Some((failed, killed_at)) = self.crashed.take() else {
            return;
        };
        self.record(LogEntry::CoordinatorLost { module_id: failed.clone() });
        match self.elect() {
            Some(successor) => {
                self.failovers.push(Failover { failed, killed_at, detected_by, elected_at: self.now, successor })
            }
            None => self.diagnostic("coordinator", "no module left to host the coordinator"),
        }
    }

    /// Installs the smallest eligible module as host and replays work that waited for it.
    fn elect(&mut self) -> Option<ModuleId> {
        let eligible: BTreeSet<ModuleId> = self
            .coord
            .registry
            .alive()
            .into_iter()
            .filter(|m| !self.failed_hosts.contains(m) && !self.leaving.contains(m))
            .collect();
        let host = elect_coordinator(&eligible, None).ok()?;
        self.coord.host = Some(host.clone());
        self.record(LogEntry::CoordinatorElected { module_id: host.clone() });
        for a in self.agents.values_mut() {
            a.configuration.coordinator_beat = Some(self.now);
        }
        for msg in std::mem::take(&mut self.held_messages) {
            self.coordinator_handle(msg);
        }
        while let Some(e) = self.deferred.pop_front() {
            if let Err(err) = self.execute_reconfiguration(e) {
                self.diagnostic("script", format!("deferred reconfiguration rejected: {err}"));
            }
        }
        self.dispatch_all();
        Some(host)
    }

    // ---- reconfiguration ----

    /// Applies one layout, demand or fault event at the current instant.
    pub fn execute_reconfiguration(&mut self, event: ReconfigEvent) -> Result<(), SimError> {
        match event {
            ReconfigEvent::AddModule { setup } => {
                let id = setup.placement.module_id.clone();
                if self.agents.contains_key(&id) || self.coord.topology.contains(&id) {
                    return Err(SimError::DuplicateModule(id));
                }
                self.join(setup);
            }
            ReconfigEvent::RemoveModule { module_id } => {
                if !self.agents.contains_key(&module_id) {
                    return Err(SimError::UnknownModule(module_id));
                }
                if self.leaving.contains(&module_id) {
                    return Ok(());
                }
                if !self.coordinator_up() || !self.coord.registry.get(&module_id).is_some_and(|e| e.alive) {
                    self.deferred.push_back(ReconfigEvent::RemoveModule { module_id });
                    return Ok(());
                }
                self.coord.registry.mark_leaving(&module_id);
                self.coord.topology = self.coord.topology.with_status(&module_id, removed_status())?;
                self.leaving.insert(module_id.clone());
                self.record(LogEntry::ModuleLeaving { module_id: module_id.clone() });
                self.renegotiate(Trigger::LayoutChanged { hint: BTreeSet::from([module_id.clone()]) });
                self.refresh_static_paths();
                self.push(self.now, Event::DrainCheck(module_id));
            }
            ReconfigEvent::KillCoordinator => match self.coord.host.take() {
                Some(host) => {
                    self.failed_hosts.insert(host.clone());
                    self.crashed = Some((host.clone(), self.now));
                    self.diagnostic(host.as_str(), "coordinator instance stopped");
                }
                None => self.diagnostic("script", "kill_coordinator without an active coordinator"),
            },
            ReconfigEvent::DemandChange { relation_id, required_throughput } => {
                let st = self
                    .relations
                    .get_mut(&relation_id)
                    .ok_or_else(|| SimError::UnknownRelation(relation_id.clone()))?;
                if !(required_throughput.is_finite() && required_throughput > 0.0) {
                    return Err(
                        RoutingError::InvalidRelation(relation_id, "required_throughput must be > 0".into()).into()
                    );
                }
                st.arrivals.set_throughput(self.now, required_throughput);
                st.generation += 1;
                let (next, generation) = (st.arrivals.peek(), st.generation);
                if next < self.horizon {
                    self.push(next.max(self.now), Event::Arrival(relation_id.clone(), generation));
                }
                self.record(LogEntry::DemandChanged { relation_id: relation_id.clone(), required_throughput });
                if self.coordinator_up() && self.routes_ready {
                    self.renegotiate(Trigger::DemandChanged { relation_id, new_throughput: required_throughput });
                    self.dispatch_all();
                } else {
                    self.deferred.push_back(ReconfigEvent::DemandChange { relation_id, required_throughput });
                }
            }
        }
        Ok(())
    }

    fn on_drain_check(&mut self, module: ModuleId) {
        let busy = self.coord.is_occupied(&module, self.now)
            || self.agents.get(&module).is_some_and(|a| !a.holding.is_empty());
        if busy || !self.coordinator_up() {
            self.push(self.now + self.settings.heartbeat_ms, Event::DrainCheck(module));
            return;
        }
        match self.coord.deregister_module(&module, self.now) {
            Ok((_, hint)) => {
                self.agents.remove(&module);
                self.leaving.remove(&module);
                self.record(LogEntry::ModuleRemoved { module_id: module.clone() });
                self.broadcast_topology();
                self.renegotiate(Trigger::LayoutChanged { hint });
                self.refresh_static_paths();
                if self.coord.host.as_ref() == Some(&module) {
                    // Orderly handover of the coordinator role.
                    self.coord.host = None;
                    self.record(LogEntry::CoordinatorLost { module_id: module });
                    if self.elect().is_none() {
                        self.diagnostic("coordinator", "no module left to host the coordinator");
                    }
                }
                self.dispatch_all();
            }
            Err(e) => self.diagnostic("coordinator", format!("deregistration of `{module}` failed: {e}")),
        }
    }

    // ---- operator hooks ----

    pub fn set_strategy(&mut self, strategy: Strategy) {
        if strategy != self.strategy {
            self.strategy = strategy;
            self.record(LogEntry::StrategyChanged { strategy: strategy.to_string() });
            self.dispatch_all();
        }
    }

    /// Installs an operator-forced path for a route.
    pub fn override_route(&mut self, route_id: &RouteId, forced_path: Vec<ModuleId>) -> Result<RouteId, RoutingError> {
        if !self.coordinator_up() {
            return Err(RoutingError::UnknownRoute(route_id.clone()));
        }
        let outcome = self
            .coord
            .routes
            .renegotiate(&self.coord.topology, Trigger::OperatorOverride { route_id: route_id.clone(), forced_path })?;
        let installed = outcome.installed.first().cloned().expect("an accepted override installs a route");
        self.publish(outcome);
        self.dispatch_all();
        Ok(installed)
    }

    /// Starts removal of a module, refusing while a TU is on or booked through it.
    pub fn remove_module(&mut self, module: &ModuleId) -> Result<(), SimError> {
        if !self.agents.contains_key(module) {
            return Err(SimError::UnknownModule(module.clone()));
        }
        if self.coord.is_occupied(module, self.now) || self.agents[module].holding.values().next().is_some() {
            return Err(CoordinatorError::ModuleOccupied(module.clone()).into());
        }
        self.execute_reconfiguration(ReconfigEvent::RemoveModule { module_id: module.clone() })
    }

    pub fn add_module(
        &mut self,
        descriptor: ModuleDescriptor,
        placement: crate::topology::Placement,
        descriptor_ref: String,
    ) -> Result<(), SimError> {
        self.execute_reconfiguration(ReconfigEvent::AddModule {
            setup: ModuleSetup { descriptor, placement, descriptor_ref },
        })
    }

    pub fn set_demand(&mut self, relation_id: RelationId, required_throughput: f64) -> Result<(), SimError> {
        self.execute_reconfiguration(ReconfigEvent::DemandChange { relation_id, required_throughput })
    }

    /// Records the outcome of an operator command in the event log.
    pub fn note_operator_command(&mut self, command_id: &str, accepted: bool, detail: &str) {
        self.record(LogEntry::OperatorCommand {
            command_id: command_id.to_owned(),
            accepted,
            detail: detail.to_owned(),
        });
    }
}
