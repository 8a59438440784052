//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use amfs_core::agent::{EventLog, LogEntry};
use amfs_core::model::{
    validate_descriptor, Ability, AbilityKind, Flow, Footprint, InternalLink, ModuleDescriptor, ModuleKind,
    ModuleStatus, PhysicalInterface,
};
use amfs_core::routing::{
    feasible_subgraph, shortest_process_time_path, LinkKey, MaterialFlowRelation, RouteSet, Traversal, Trigger,
};
use amfs_core::sim::batch::{compare, run_batch, run_batch_sequential, Ratio};
use amfs_core::sim::checks::{
    concurrency_overflows, late_or_missing_deliveries, opposing_overlaps, paths_used, sequence_violations, tu_account,
};
use amfs_core::sim::{
    effort_model, load_scenario, plan_routes, run_scenario, Breakeven, EffortModel, RunOutput, ScenarioConfig,
    Simulation, Strategy,
};
use amfs_core::topology::{Endpoint, GeometricTolerance, Placement, Rotation, Topology};
use amfs_core::{InterfaceId, ModuleId, SimTime};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes straight to stderr so the line shows up without `--nocapture`.
fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance criterion {n} [{name}]: {verdict} ({detail})");
}

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).join("scenario.json");
    load_scenario(path).unwrap()
}

fn ids(v: &[&str]) -> Vec<ModuleId> {
    v.iter().map(|s| ModuleId::from(*s)).collect()
}

fn first<T: std::fmt::Display>(v: &[T]) -> String {
    v.first().map_or_else(|| "none".to_owned(), |x| x.to_string())
}

// ---------------------------------------------------------------------------
// random grid topologies

const SIDES: [(&str, (f64, f64), f64); 4] =
    [("n", (500.0, 1000.0), 90.0), ("e", (1000.0, 500.0), 0.0), ("s", (500.0, 0.0), 270.0), ("w", (0.0, 500.0), 180.0)];

fn random_cell_module(id: &str, rng: &mut ChaCha8Rng) -> ModuleDescriptor {
    loop {
        let interfaces = SIDES
            .iter()
            .map(|(name, pos, heading)| PhysicalInterface {
                interface_id: (*name).into(),
                local_position: *pos,
                heading: *heading,
                flow: *[Flow::Bidirectional, Flow::Bidirectional, Flow::Bidirectional, Flow::Inbound, Flow::Outbound]
                    .choose(rng)
                    .unwrap(),
                tu_class: "bin".into(),
            })
            .collect();
        let mut pairs: Vec<(usize, usize)> =
            (0..4).flat_map(|a| (0..4).filter(move |&b| b != a).map(move |b| (a, b))).collect();
        pairs.shuffle(rng);
        let internal_links = pairs[..rng.random_range(2..=7)]
            .iter()
            .map(|&(a, b)| InternalLink {
                from_interface: SIDES[a].0.into(),
                to_interface: SIDES[b].0.into(),
                // Few distinct times so ties are common.
                process_time: f64::from(rng.random_range(1..=3u32)),
                capacity: f64::from(rng.random_range(2..=12u32)),
                reversible: rng.random_bool(0.4),
            })
            .collect();
        let d = ModuleDescriptor {
            module_id: id.into(),
            module_kind: ModuleKind::Transport,
            abilities: vec![Ability::new(AbilityKind::Transport)],
            footprint: Footprint { width: 1000.0, length: 1000.0 },
            interfaces,
            internal_links,
            transfer_cost: 1.0,
            status: ModuleStatus::default(),
        };
        if validate_descriptor(&d).is_valid() {
            return d;
        }
    }
}

/// `count` adjacent modules on a 3x3 grid, with ids shuffled against position.
fn random_grid(rng: &mut ChaCha8Rng, count: usize) -> Option<Topology> {
    // Grow a 4-connected patch so most relations have somewhere to go.
    let mut cells = vec![rng.random_range(0..9usize)];
    while cells.len() < count {
        let c = *cells.choose(rng).unwrap();
        let (col, row) = (c % 3, c / 3);
        let mut next = Vec::new();
        if col > 0 {
            next.push(c - 1)
        }
        if col < 2 {
            next.push(c + 1)
        }
        if row > 0 {
            next.push(c - 3)
        }
        if row < 2 {
            next.push(c + 3)
        }
        let n = *next.choose(rng).unwrap();
        if !cells.contains(&n) {
            cells.push(n);
        }
    }
    let mut names: Vec<String> = ('a'..='i').map(|c| c.to_string()).collect();
    names.shuffle(rng);
    let placements: Vec<(ModuleDescriptor, Placement)> = cells[..count]
        .iter()
        .zip(&names)
        .map(|(&cell, name)| {
            let (col, row) = ((cell % 3) as f64, (cell / 3) as f64);
            (random_cell_module(name, rng), Placement::new(name.as_str(), col * 1000.0, row * 1000.0, Rotation::R0))
        })
        .collect();
    Topology::from_placements(&placements, &GeometricTolerance::default()).ok()
}

fn random_relation(rng: &mut ChaCha8Rng, topo: &Topology, id: &str, demand: f64) -> MaterialFlowRelation {
    let modules: Vec<&ModuleId> = topo.modules().keys().collect();
    let source = *modules.choose(rng).unwrap();
    let sink = loop {
        let s = *modules.choose(rng).unwrap();
        if s != source {
            break s;
        }
    };
    MaterialFlowRelation::new(id, source.clone(), sink.clone(), demand)
}

fn link_capacity(topo: &Topology, key: &LinkKey) -> f64 {
    topo.module(&key.module_id).unwrap().descriptor.internal_links[key.link].capacity
}

/// Reservation sums recomputed from the active routes.
fn recomputed_reservations(routes: &RouteSet) -> BTreeMap<LinkKey, f64> {
    let mut out = BTreeMap::new();
    for r in routes.routes().values().filter(|r| r.is_active()) {
        for h in &r.hops {
            *out.entry(h.link_key()).or_insert(0.0) += r.reserved_capacity;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// path oracle: exhaustive enumeration of simple paths

type Candidate = (u64, Vec<ModuleId>, Vec<Traversal>);

struct Oracle<'a> {
    topo: &'a Topology,
    nodes: BTreeMap<ModuleId, Vec<Traversal>>,
    entries: BTreeMap<ModuleId, Vec<Traversal>>,
    exits: BTreeMap<ModuleId, Vec<Traversal>>,
    sink: ModuleId,
    best: Option<Candidate>,
}

impl<'a> Oracle<'a> {
    fn new(topo: &'a Topology, routes: &RouteSet, rel: &MaterialFlowRelation) -> Self {
        let reserved = recomputed_reservations(routes);
        let mut nodes: BTreeMap<ModuleId, Vec<Traversal>> = BTreeMap::new();
        for (id, m) in topo.modules().iter().filter(|(_, m)| m.status.is_operational()) {
            let mut own = Vec::new();
            for (idx, link) in m.descriptor.internal_links.iter().enumerate() {
                let residual =
                    link.capacity - reserved.get(&LinkKey { module_id: id.clone(), link: idx }).copied().unwrap_or(0.0);
                if residual + 1e-9 < rel.required_throughput {
                    continue;
                }
                let t = Traversal {
                    module_id: id.clone(),
                    entry: link.from_interface.clone(),
                    exit: link.to_interface.clone(),
                    link: idx,
                    forward: true,
                    process_time_ms: (link.process_time * 1000.0).round() as u64,
                    reversible: link.reversible,
                    concurrent_tus: link.concurrent_tus(),
                };
                if link.reversible {
                    own.push(Traversal { entry: t.exit.clone(), exit: t.entry.clone(), forward: false, ..t.clone() });
                }
                own.push(t);
            }
            nodes.insert(id.clone(), own);
        }
        let free = |m: &ModuleId, iface: &InterfaceId, inbound: bool| {
            let flow = topo.module(m).unwrap().descriptor.interface(iface).unwrap().flow;
            topo.connection_at(&Endpoint::new(m.clone(), iface.clone())).is_none()
                && if inbound { flow.accepts_inbound() } else { flow.accepts_outbound() }
        };
        let pick = |inbound: bool| -> BTreeMap<ModuleId, Vec<Traversal>> {
            nodes
                .iter()
                .map(|(m, own)| {
                    let b: Vec<Traversal> = own
                        .iter()
                        .filter(|t| free(m, if inbound { &t.entry } else { &t.exit }, inbound))
                        .cloned()
                        .collect();
                    (m.clone(), if b.is_empty() { own.clone() } else { b })
                })
                .collect()
        };
        let (entries, exits) = (pick(true), pick(false));
        Oracle { topo, nodes, entries, exits, sink: rel.sink.clone(), best: None }
    }

    fn successors(&self, t: &Traversal) -> Vec<Traversal> {
        let ep = Endpoint::new(t.module_id.clone(), t.exit.clone());
        let Some(next) = self.topo.connection_at(&ep).and_then(|c| c.exit_through(&ep)) else {
            return Vec::new();
        };
        self.nodes
            .get(&next.module_id)
            .map(|own| own.iter().filter(|n| n.entry == next.interface_id).cloned().collect())
            .unwrap_or_default()
    }

    fn walk(&mut self, cost: u64, path: &mut Vec<Traversal>) {
        let last = path.last().unwrap().clone();
        if self.exits[&self.sink].contains(&last) {
            let c = (cost, path.iter().map(|t| t.module_id.clone()).collect(), path.clone());
            if self.best.as_ref().is_none_or(|b| c < *b) {
                self.best = Some(c);
            }
            return;
        }
        if last.module_id == self.sink {
            return;
        }
        for s in self.successors(&last) {
            if path.iter().any(|t| t.module_id == s.module_id) {
                continue;
            }
            path.push(s);
            self.walk(cost + last.process_time_ms, path);
            path.pop();
        }
    }

    fn solve(mut self, source: &ModuleId) -> Option<Candidate> {
        for start in self.entries.get(source).cloned().unwrap_or_default() {
            self.walk(0, &mut vec![start]);
        }
        self.best
    }
}

// ---------------------------------------------------------------------------
// random simulation runs on reversible links

struct RandomRun {
    config: ScenarioConfig,
    deadline: SimTime,
    output: RunOutput,
}

/// The diamond with randomized link timings, demands and strategy; sometimes
/// without the lower branch so both directions must share one reversible link.
fn random_run(case: u64) -> RandomRun {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE ^ case);
    let mut config = scenario("diamond").with_seed(rng.random());
    if rng.random_bool(0.3) {
        config.modules.retain(|m| m.descriptor.module_id.as_str() != "lower");
    }
    for m in &mut config.modules {
        for link in &mut m.descriptor.internal_links {
            link.process_time = f64::from(rng.random_range(4..=24u32)) / 2.0;
            link.capacity = f64::from(rng.random_range(6..=30u32));
        }
    }
    for r in &mut config.relations {
        r.required_throughput = rng.random_range(1.0..10.0);
        r.variability = rng.random_range(0.0..0.5);
    }
    config.strategy = *Strategy::ALL.choose(&mut rng).unwrap();
    config.horizon_ms = rng.random_range(300..=900) * 1000;
    config.settings.scheduling_horizon = f64::from(rng.random_range(60..=300u32));
    let longest_path_ms: u64 = config
        .modules
        .iter()
        .map(|m| m.descriptor.internal_links.iter().map(|l| (l.process_time * 1000.0) as u64).max().unwrap_or(0))
        .sum();
    let slack_ms =
        (config.settings.scheduling_horizon * 1000.0) as u64 + config.settings.planning_latency_ms + longest_path_ms;
    let deadline = config.horizon() + slack_ms;
    let output = run_scenario(&config).unwrap();
    RandomRun { config, deadline, output }
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_throughput_ratio() {
    let config = scenario("diamond");
    let branch_capacity =
        config.modules.iter().find(|m| m.descriptor.module_id.as_str() == "upper").unwrap().descriptor.internal_links
            [0]
        .capacity;
    let load = config.relations.iter().map(|r| r.required_throughput / branch_capacity).fold(f64::INFINITY, f64::min);

    let seeds: Vec<u64> = (1..=10).collect();
    let started = Instant::now();
    let cmp = compare(&config, &[Strategy::Ssr, Strategy::BaselineOccupancy], &seeds).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let ratio = match cmp.ratio {
        Some(Ratio::Value(v)) => v,
        _ => 0.0,
    };
    let pass = load + 1e-9 >= 0.8 && ratio >= 1.30 && elapsed < 30.0;
    report(
        1,
        "throughput ratio",
        pass,
        &format!(
            "load {:.2} of branch capacity, ssr {:.3}/min, baseline {:.3}/min, ratio {ratio:.3} >= 1.30, {elapsed:.1}s < 30s",
            load, cmp.strategies[0].mean_throughput, cmp.strategies[1].mean_throughput
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_dedicated_branches() {
    let config = scenario("diamond");
    let plan = plan_routes(&config).unwrap();
    let middle = |rel: &str| plan.route_for(rel).map(|r| r.path[1].clone());
    let planned_apart = matches!((middle("l2r"), middle("r2l")), (Some(a), Some(b)) if a != b);

    // Every TU of a direction stays on its own branch, across seeds.
    let mut shared = Vec::new();
    for seed in 1..=5 {
        let out = run_scenario(&config.clone().with_seed(seed)).unwrap();
        let used = paths_used(&out.log);
        let branches =
            |rel: &str| -> BTreeSet<ModuleId> { used.get(rel).into_iter().flatten().map(|p| p[1].clone()).collect() };
        let (a, b) = (branches("l2r"), branches("r2l"));
        if a.is_empty() || b.is_empty() || !a.is_disjoint(&b) {
            shared.push(format!("seed {seed}: l2r {a:?} r2l {b:?}"));
        }
    }
    let pass = planned_apart && shared.is_empty();
    report(
        2,
        "dedicated branches",
        pass,
        &format!("l2r via {:?}, r2l via {:?}, runs sharing a branch: {}", middle("l2r"), middle("r2l"), first(&shared)),
    );
    assert!(pass);
}

#[test]
fn criterion_3_path_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checked, mut pairs, mut routed, mut background) = (0, 0, 0, 0);
    let mut mismatches = Vec::new();
    while checked < 200 {
        let count = rng.random_range(2..=8);
        let Some(topo) = random_grid(&mut rng, count) else {
            continue;
        };
        let mut routes = RouteSet::new();
        for i in 0..rng.random_range(0..=2) {
            let demand = f64::from(rng.random_range(1..=8u32));
            if routes.negotiate_route(&topo, random_relation(&mut rng, &topo, &format!("bg{i}"), demand)).is_ok() {
                background += 1;
            }
        }
        // Every ordered pair of modules, so sparse topologies still yield many comparisons.
        let demand = f64::from(rng.random_range(1..=8u32));
        for source in topo.modules().keys() {
            for sink in topo.modules().keys().filter(|m| *m != source) {
                let rel = MaterialFlowRelation::new("target", source.clone(), sink.clone(), demand);
                let sg = feasible_subgraph(&topo, &routes, &rel);
                let got = shortest_process_time_path(&sg, source, sink).unwrap().map(|p| (p.cost_ms, p.hops));
                let want = Oracle::new(&topo, &routes, &rel).solve(source).map(|(c, _, hops)| (c, hops));
                pairs += 1;
                if got.is_some() {
                    routed += 1;
                }
                if got != want {
                    mismatches.push(format!("topology {checked}: {source} -> {sink}: got {got:?} want {want:?}"));
                }
            }
        }
        checked += 1;
    }
    let pass = mismatches.is_empty();
    report(
        3,
        "path oracle",
        pass,
        &format!(
            "{checked} topologies, {pairs} relations, {routed} routable, {background} background routes, {} mismatches, first: {}",
            mismatches.len(),
            first(&mismatches)
        ),
    );
    assert!(pass, "{mismatches:#?}");
}

#[test]
fn criterion_4_capacity_safety() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sequences, mut ops, mut restores) = (0, 0, 0);
    let mut failures = Vec::new();
    while sequences < 500 {
        let count = rng.random_range(3..=8);
        let Some(topo) = random_grid(&mut rng, count) else {
            continue;
        };
        let mut routes = RouteSet::new();
        let mut relations: Vec<MaterialFlowRelation> = Vec::new();
        for step in 0..rng.random_range(5..=25) {
            ops += 1;
            let op = rng.random_range(0..4);
            match op {
                0 => {
                    let demand = f64::from(rng.random_range(1..=16u32)) / 2.0;
                    let rel = random_relation(&mut rng, &topo, &format!("r{step}"), demand);
                    relations.push(rel.clone());
                    let before = routes.residual_capacity(&topo);
                    if let Ok(id) = routes.negotiate_route(&topo, rel) {
                        // Taking the route back must leave residuals exactly as they were.
                        if rng.random_bool(0.3) {
                            routes.revoke(&id).unwrap();
                            restores += 1;
                            if routes.residual_capacity(&topo) != before {
                                failures.push(format!(
                                    "sequence {sequences} step {step}: revoke did not restore residuals"
                                ));
                            }
                        }
                    }
                }
                1 => {
                    let active: Vec<_> = routes.active_routes().map(|r| r.route_id.clone()).collect();
                    if let Some(id) = active.choose(&mut rng) {
                        routes.revoke(id).unwrap();
                    }
                }
                2 => {
                    if let Some(rel) = relations.choose(&mut rng) {
                        let trigger = Trigger::DemandChanged {
                            relation_id: rel.relation_id.clone(),
                            new_throughput: f64::from(rng.random_range(1..=20u32)) / 2.0,
                        };
                        let _ = routes.renegotiate(&topo, trigger);
                    }
                }
                _ => {
                    let hint = topo.modules().keys().filter(|_| rng.random_bool(0.4)).cloned().collect();
                    let _ = routes.renegotiate(&topo, Trigger::LayoutChanged { hint });
                }
            }
            if !routes.capacity_violations(&topo).is_empty() {
                failures
                    .push(format!("sequence {sequences} step {step} op {op}: {:?}", routes.capacity_violations(&topo)));
            }
            let sums = recomputed_reservations(&routes);
            for (key, sum) in &sums {
                if *sum > link_capacity(&topo, key) + 1e-9 {
                    failures.push(format!("sequence {sequences} step {step}: {key} holds {sum}"));
                }
                let residual = routes.residual(&topo, key);
                if (residual - (link_capacity(&topo, key) - sum)).abs() > 1e-9 {
                    failures
                        .push(format!("sequence {sequences} step {step}: {key} residual {residual} vs {sum} reserved"));
                }
            }
            for (key, residual) in routes.residual_capacity(&topo) {
                if !sums.contains_key(&key) && residual != link_capacity(&topo, &key) {
                    failures.push(format!("sequence {sequences} step {step}: idle {key} shows residual {residual}"));
                }
            }
        }
        sequences += 1;
    }
    let pass = failures.is_empty();
    report(
        4,
        "capacity safety",
        pass,
        &format!(
            "{sequences} sequences, {ops} operations, {restores} exact-restore checks, first failure: {}",
            first(&failures)
        ),
    );
    assert!(pass, "{failures:#?}");
}

#[test]
fn criterion_5_anisotropy_and_delivery() {
    let (mut overlaps, mut overflows, mut late) = (Vec::new(), Vec::new(), Vec::new());
    let (mut scheduled, mut corridor) = (0, 0);
    for case in 0..200 {
        let run = random_run(case);
        if run.config.modules.len() == 3 {
            corridor += 1;
        }
        scheduled += tu_account(&run.output.log).scheduled;
        overlaps.extend(opposing_overlaps(&run.output.log).into_iter().map(|v| format!("case {case}: {v}")));
        overflows.extend(concurrency_overflows(&run.output.log).into_iter().map(|v| format!("case {case}: {v}")));
        late.extend(
            late_or_missing_deliveries(&run.output.log, run.deadline).into_iter().map(|v| format!("case {case}: {v}")),
        );
    }
    let pass = overlaps.is_empty() && overflows.is_empty() && late.is_empty();
    report(
        5,
        "anisotropy and delivery",
        pass,
        &format!(
            "200 runs ({corridor} single-branch), {scheduled} scheduled TUs, {} opposing overlaps, {} concurrency overflows, {} late or missing; first: {}",
            overlaps.len(),
            overflows.len(),
            late.len(),
            first(&[overlaps.clone(), overflows.clone(), late.clone()].concat())
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_sequence() {
    let mut violations = Vec::new();
    let mut delivered = 0;
    let mut check = |label: String, log: &EventLog| {
        delivered += tu_account(log).delivered;
        violations.extend(sequence_violations(log).into_iter().map(|v| format!("{label}: {v}")));
    };
    for case in 200..300 {
        let run = random_run(case);
        check(format!("random case {case}"), &run.output.log);
    }
    for strategy in Strategy::ALL {
        let out = run_scenario(&scenario("diamond").with_strategy(strategy)).unwrap();
        check(format!("diamond {strategy}"), &out.log);
    }
    let out = run_scenario(&scenario("demonstrator")).unwrap();
    check("demonstrator".into(), &out.log);
    let pass = violations.is_empty();
    report(
        6,
        "sequence",
        pass,
        &format!("104 runs, {delivered} deliveries, {} out of order, first: {}", violations.len(), first(&violations)),
    );
    assert!(pass, "{violations:#?}");
}

/// Registry, topology and route consistency at one instant.
fn structural_violations(sim: &Simulation) -> Vec<String> {
    let mut out = Vec::new();
    let t = sim.now();
    let coord = sim.coordinator();
    let topo = sim.topology();
    let alive = coord.registry.alive();
    for m in &alive {
        if !topo.is_operational(m) {
            out.push(format!("{t}: {m} registered alive but not operational"));
        }
    }
    for (m, entry) in topo.modules() {
        if entry.status.is_operational() && !alive.contains(m) && !sim.is_leaving(m) {
            out.push(format!("{t}: {m} operational but not registered"));
        }
    }
    for route in sim.routes().active_routes() {
        let path = route.path();
        if let Some(m) = path.iter().find(|m| !topo.is_operational(m)) {
            out.push(format!("{t}: {} crosses non-operational {m}", route.route_id));
        }
        for pair in path.windows(2) {
            if !topo.neighbors(&pair[0]).contains(&pair[1]) {
                out.push(format!("{t}: {} jumps {} -> {}", route.route_id, pair[0], pair[1]));
            }
        }
    }
    for key in sim.routes().capacity_violations(topo) {
        out.push(format!("{t}: over capacity on {key}"));
    }
    let account = tu_account(sim.log());
    if account.released != sim.tus().len() {
        out.push(format!("{t}: {} released but {} tracked", account.released, sim.tus().len()));
    }
    out
}

fn scheduled_paths_between(log: &EventLog, from: SimTime, to: SimTime) -> BTreeSet<Vec<ModuleId>> {
    log.records()
        .iter()
        .filter(|r| r.t >= from && r.t < to)
        .filter_map(|r| match &r.entry {
            LogEntry::Scheduled { path, .. } => Some(path.clone()),
            _ => None,
        })
        .collect()
}

fn first_time(log: &EventLog, pred: impl Fn(&LogEntry) -> bool) -> Option<SimTime> {
    log.records().iter().find(|r| pred(&r.entry)).map(|r| r.t)
}

#[test]
fn criterion_7_reconfiguration() {
    let config = scenario("demonstrator");
    let heartbeat = config.settings.heartbeat_ms;
    let kill_at =
        config.script.iter().find(|e| matches!(e.event, amfs_core::sim::ReconfigEvent::KillCoordinator)).unwrap().at;
    let mut sim = Simulation::new(&config).unwrap();
    let mut problems: Vec<String> = Vec::new();

    sim.step_until(SimTime::from_secs(1.0));
    let startup_ok = sim.coordinator().registry.alive()
        == ids(&["feed", "portal1", "sink", "split"]).into_iter().collect()
        && sim.coordinator().host.is_some()
        && config.relations.iter().all(|r| {
            // A relation without capacity at startup must at least be reported as unrouted.
            sim.routes().route_for(&r.relation_id).is_some()
                || sim.route_plan().unrouted.iter().any(|u| u.relation_id == r.relation_id)
        })
        && sim.routes().route_for(&"r1".into()).is_some();
    if !startup_ok {
        problems.push("startup: registry, coordinator or routes incomplete after 1 s".into());
    }

    let mut samples = 0;
    let mut hosts_after_kill = BTreeSet::new();
    let mut t = SimTime::from_secs(1.0);
    while !sim.is_finished() {
        t += 5_000;
        sim.step_until(t);
        samples += 1;
        let in_failover = t >= kill_at && t.saturating_sub(kill_at) <= 3 * heartbeat;
        if !in_failover {
            problems.extend(structural_violations(&sim));
            match &sim.coordinator().host {
                Some(h) if sim.coordinator().registry.alive().contains(h) => {
                    if t > kill_at {
                        hosts_after_kill.insert(h.clone());
                    }
                }
                other => problems.push(format!("{t}: coordinator host {other:?} not a live module")),
            }
        }
    }
    let failovers = sim.failovers().to_vec();
    let output = sim.finish();
    let log = &output.log;

    // Add: afterwards both portals receive orders.
    let added =
        first_time(log, |e| matches!(e, LogEntry::ModuleAdded { module_id, .. } if module_id.as_str() == "portal2"));
    let leaving =
        first_time(log, |e| matches!(e, LogEntry::ModuleLeaving { module_id } if module_id.as_str() == "portal2"));
    let removed =
        first_time(log, |e| matches!(e, LogEntry::ModuleRemoved { module_id } if module_id.as_str() == "portal2"));
    let portals_used: BTreeSet<ModuleId> = match (added, leaving) {
        (Some(a), Some(l)) => scheduled_paths_between(log, a, l)
            .into_iter()
            .flatten()
            .filter(|m| m.as_str().starts_with("portal"))
            .collect(),
        _ => BTreeSet::new(),
    };
    if portals_used != ids(&["portal1", "portal2"]).into_iter().collect() {
        problems.push(format!("add: portals used after the add were {portals_used:?}"));
    }

    // Remove: nothing is booked onto or enters the module once it is leaving.
    let portal2 = ModuleId::from("portal2");
    match (leaving, removed) {
        (Some(l), Some(r)) => {
            if scheduled_paths_between(log, l, SimTime::MAX).iter().any(|p| p.contains(&portal2)) {
                problems.push("remove: TUs booked through portal2 after it started leaving".into());
            }
            let late_entry = log.records().iter().any(|rec| {
                rec.t >= r && matches!(&rec.entry, LogEntry::Entered { module_id, .. } if *module_id == portal2)
            });
            if late_entry {
                problems.push("remove: a TU entered portal2 after removal".into());
            }
        }
        _ => problems.push("remove: portal2 was never removed".into()),
    }

    // Kill: one failover within three heartbeat periods, and work continues.
    let failover_ms = failovers.first().map(|f| f.elected_at - f.killed_at);
    match failovers.as_slice() {
        [f] => {
            if f.elected_at - f.killed_at > 3 * heartbeat {
                problems.push(format!("kill: failover took {} ms", f.elected_at - f.killed_at));
            }
            if f.successor == f.failed || hosts_after_kill.contains(&f.failed) {
                problems.push("kill: failed module still coordinating".into());
            }
            let delivered_after = log
                .records()
                .iter()
                .filter(|r| r.t > f.elected_at && matches!(r.entry, LogEntry::Delivered { .. }))
                .count();
            if delivered_after == 0 {
                problems.push("kill: no deliveries after failover".into());
            }
        }
        other => problems.push(format!("kill: expected one failover, saw {}", other.len())),
    }

    let account = tu_account(log);
    if !output.summary.conserves_tus()
        || account.released != output.summary.released
        || account.delivered != output.summary.delivered
    {
        problems.push(format!("conservation: {:?} vs {account:?}", output.summary));
    }

    let pass = problems.is_empty();
    report(
        7,
        "reconfiguration",
        pass,
        &format!(
            "{samples} invariant samples, portals after add {portals_used:?}, failover {} ms (limit {} ms), released {} delivered {} in flight {} waiting {}, first problem: {}",
            failover_ms.map_or(-1, |v| v as i64),
            3 * heartbeat,
            output.summary.released,
            output.summary.delivered,
            output.summary.in_flight,
            output.summary.waiting,
            first(&problems)
        ),
    );
    assert!(pass, "{problems:#?}");
}

#[test]
fn criterion_8_determinism() {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, seed) in [("diamond", 11), ("demonstrator", 7)] {
        let config = scenario(name).with_seed(seed);
        let a = run_scenario(&config).unwrap().log.to_jsonl();
        let b = run_scenario(&config).unwrap().log.to_jsonl();
        let c = run_scenario(&config.clone().with_seed(seed + 1)).unwrap().log.to_jsonl();
        let same = a.as_bytes() == b.as_bytes();
        let differs = a != c;
        pass &= same && differs;
        detail.push(format!("{name}: {} bytes identical={same}, other seed differs={differs}", a.len()));
    }
    let configs: Vec<ScenarioConfig> = (1..=4).map(|s| scenario("diamond").with_seed(s)).collect();
    let parallel: Vec<_> = run_batch(&configs).into_iter().map(Result::unwrap).collect();
    let sequential: Vec<_> = run_batch_sequential(&configs).into_iter().map(Result::unwrap).collect();
    let batch_same = parallel == sequential;
    pass &= batch_same;
    detail.push(format!("batch parallel == sequential: {batch_same}"));
    report(8, "determinism", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_9_effort_model() {
    let values = [0.0, 0.5, 1.0, 2.5, 10.0, 37.0, 100.0];
    let mut cases = 0;
    let mut failures = Vec::new();
    for &ie_mas in &values {
        for &ie_con in &values {
            for &ce_man in &values {
                for n in [0u32, 1, 3, 10, 250] {
                    cases += 1;
                    let r = effort_model(&EffortModel { ie_mas, ie_con, ce_man, n }).unwrap();
                    let want_te_con = ie_con + f64::from(n) * ce_man;
                    // Closed form, clamped at zero when agents are no more expensive up front.
                    let want_breakeven = if ie_mas <= ie_con {
                        Breakeven::At(0)
                    } else if ce_man == 0.0 {
                        Breakeven::Unbounded
                    } else {
                        Breakeven::At(((ie_mas - ie_con) / ce_man).ceil() as u64)
                    };
                    // And the smallest n where conventional effort has caught up, by search.
                    let searched = (0..100_000u64).find(|&k| ie_con + k as f64 * ce_man >= ie_mas);
                    let consistent = match (r.n_breakeven, searched) {
                        (Breakeven::At(k), Some(s)) => k == s,
                        (Breakeven::Unbounded, None) => true,
                        _ => false,
                    };
                    if r.te_con != want_te_con || r.te_mas != ie_mas || r.n_breakeven != want_breakeven || !consistent {
                        failures.push(format!("({ie_mas}, {ie_con}, {ce_man}, {n}) gave {r:?}"));
                    }
                }
            }
        }
    }
    let rejects_negative = effort_model(&EffortModel { ie_mas: -1.0, ie_con: 0.0, ce_man: 1.0, n: 0 }).is_err();
    let pass = failures.is_empty() && rejects_negative;
    report(
        9,
        "effort model",
        pass,
        &format!(
            "{cases} grid points, {} mismatches, negative input rejected={rejects_negative}, first: {}",
            failures.len(),
            first(&failures)
        ),
    );
    assert!(pass, "{failures:#?}");
}
