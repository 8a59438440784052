use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::time::Duration;

use amfs_core::hmi::codec::{encode, read_message, write_message, Message};
use amfs_core::hmi::{Constraint, Gateway, LayoutSnapshot, OperatorCommand, Server};
use amfs_core::routing::MaterialFlowRelation;
use amfs_core::sim::{load_scenario, ScenarioConfig, TuState};
use amfs_core::{ModuleId, RouteId, SimTime};

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).join("scenario.json");
    load_scenario(path).unwrap()
}

/// Diamond with only the left-to-right flow, so both branches have spare capacity.
fn one_way_diamond() -> ScenarioConfig {
    let mut c = scenario("diamond");
    c.relations = vec![MaterialFlowRelation::new("l2r", "left", "right", 4.0)];
    c
}

fn ids(path: &[&str]) -> Vec<ModuleId> {
    path.iter().map(|m| ModuleId::from(*m)).collect()
}

fn step(g: &mut Gateway, ms: u64) {
    let (ack, _) = g.apply("step", &OperatorCommand::Step { ms });
    assert!(ack.accepted);
}

fn route_of(g: &Gateway, relation: &str) -> RouteId {
    g.snapshot().route_for(relation).expect("relation routed").route_id.clone()
}

#[test]
fn startup_snapshot_flags_one_coordinator_and_idle_modules() {
    let mut g = Gateway::new(&scenario("demonstrator"), true, 1.0).unwrap();
    step(&mut g, 200);
    let s = g.snapshot();
    assert_eq!(s.modules.len(), 4);
    assert_eq!(s.modules.iter().filter(|m| m.is_active_coordinator).count(), 1);
    for m in &s.modules {
        let idle = g.simulation().agents()[&m.module_id].holding.is_empty();
        assert_eq!(idle, m.workload == 0.0 && m.running_actuators.is_empty(), "{}", m.module_id);
    }
    assert!(s.is_consistent());
    assert_eq!(s.revision, g.simulation().topology().revision());
    assert_eq!(s.strategy, "ssr");
}

#[test]
fn paused_gateway_emits_nothing_and_snapshots_are_stable() {
    let mut g = Gateway::new(&scenario("diamond"), true, 1.0).unwrap();
    step(&mut g, 500);
    let before = g.snapshot().clone();
    assert!(g.tick(Duration::from_secs(5)).is_none());
    assert_eq!(g.simulation().now(), before.sim_time);
    assert_eq!(g.snapshot(), &before);
}

#[test]
fn deltas_replay_to_the_live_snapshot() {
    let mut g = Gateway::new(&scenario("diamond"), false, 20.0).unwrap();
    let mut client: LayoutSnapshot = g.snapshot().clone();
    let mut deltas = 0;
    for _ in 0..400 {
        if let Some(d) = g.tick(Duration::from_millis(100)) {
            assert_eq!(d.prev_seq + 1, d.seq);
            client.apply(&d).unwrap();
            deltas += 1;
        }
    }
    assert!(deltas > 10);
    assert_eq!(&client, g.snapshot());
    let delivered = client.orders.iter().filter(|o| matches!(o.state, TuState::Delivered { .. })).count();
    assert!(delivered > 0);
    let r = client.route_for("l2r").unwrap();
    assert!(r.used_capacity >= 0.0);
    assert_eq!(r.average_duration.is_some(), g.simulation().route_stats(&r.route_id).unwrap().delivered > 0);
}

#[test]
fn skipped_delta_is_detected() {
    let mut g = Gateway::new(&scenario("diamond"), true, 1.0).unwrap();
    let mut client = g.snapshot().clone();
    let (_, first) = g.apply("a", &OperatorCommand::Step { ms: 2_000 });
    let (_, second) = g.apply("b", &OperatorCommand::Step { ms: 60_000 });
    assert!(first.is_some());
    assert!(client.apply(&second.unwrap()).is_err());
}

#[test]
fn override_onto_free_branch_is_used_by_later_tus() {
    let mut g = Gateway::new(&one_way_diamond(), true, 1.0).unwrap();
    step(&mut g, 1_000);
    let route = route_of(&g, "l2r");
    let before = g.snapshot().route_for("l2r").unwrap().path.clone();
    let other = if before.contains(&"upper".into()) { "lower" } else { "upper" };
    let (ack, delta) =
        g.apply("ov", &OperatorCommand::OverrideRoute { route_id: route, forced_path: ids(&["left", other, "right"]) });
    assert!(ack.accepted, "{ack:?}");
    assert_eq!(ack.command_id, "ov");
    assert!(delta.is_some_and(|d| !d.routes_upserted.is_empty()));
    assert_eq!(g.snapshot().route_for("l2r").unwrap().path, ids(&["left", other, "right"]));

    let t0 = g.simulation().now();
    step(&mut g, 600_000);
    let later: Vec<_> = g.simulation().tus().values().filter(|t| t.release_time > t0 && t.route_id.is_some()).collect();
    assert!(!later.is_empty());
    assert!(later.iter().all(|t| t.path == ids(&["left", other, "right"])));
}

#[test]
fn override_rejections_name_the_constraint_and_change_nothing() {
    let mut g = Gateway::new(&scenario("diamond"), true, 1.0).unwrap();
    step(&mut g, 1_000);
    let l2r = route_of(&g, "l2r");
    let r2l_path = g.snapshot().route_for("r2l").unwrap().path.clone();
    let before = g.snapshot().clone();

    // The other relation already fills the opposite branch.
    let saturated = r2l_path[1].clone();
    let (ack, _) = g.apply(
        "cap",
        &OperatorCommand::OverrideRoute {
            route_id: l2r.clone(),
            forced_path: vec!["left".into(), saturated.clone(), "right".into()],
        },
    );
    let rej = ack.rejection.unwrap();
    assert_eq!(rej.constraint, Constraint::CapacityViolation);
    assert!(rej.detail.contains(saturated.as_str()), "{}", rej.detail);

    let (ack, _) =
        g.apply("gap", &OperatorCommand::OverrideRoute { route_id: l2r.clone(), forced_path: ids(&["left", "right"]) });
    assert_eq!(ack.rejection.unwrap().constraint, Constraint::DisconnectedPath);

    let (ack, _) = g.apply(
        "who",
        &OperatorCommand::OverrideRoute { route_id: "nope".into(), forced_path: ids(&["left", "right"]) },
    );
    assert_eq!(ack.rejection.unwrap().constraint, Constraint::UnknownEntity);

    let (ack, _) = g.apply("rm", &OperatorCommand::RemoveModule { module_id: "ghost".into() });
    assert_eq!(ack.rejection.unwrap().constraint, Constraint::UnknownEntity);

    assert_eq!(g.snapshot().routes, before.routes);
    assert_eq!(g.snapshot().modules, before.modules);
}

#[test]
fn removing_a_busy_module_is_refused_and_actuators_show_direction() {
    let mut g = Gateway::new(&one_way_diamond(), true, 1.0).unwrap();
    let busy = loop {
        step(&mut g, 250);
        if let Some(m) =
            g.snapshot().modules.iter().find(|m| m.module_id.as_str() != "left" && !m.running_actuators.is_empty())
        {
            break m.clone();
        }
        assert!(g.simulation().now() < SimTime::from_secs(600.0), "no transport started");
    };
    assert!(busy.workload > 0.0);
    assert!(busy.running_actuators.iter().all(|a| a.direction.as_deref().is_some_and(|d| d.contains("->"))));
    let (ack, delta) = g.apply("rm", &OperatorCommand::RemoveModule { module_id: busy.module_id.clone() });
    let rej = ack.rejection.unwrap();
    assert_eq!(rej.constraint, Constraint::ModuleOccupied);
    assert!(rej.detail.contains("module occupied"));
    assert!(delta.is_none());
}

#[test]
fn add_module_from_catalog_and_layout_conflicts() {
    let mut g = Gateway::new(&scenario("demonstrator"), true, 1.0).unwrap();
    step(&mut g, 1_000);
    let (ack, _) = g.apply(
        "clash",
        &OperatorCommand::AddModule {
            module_id: "p9".into(),
            descriptor_ref: "descriptors/portal.json".into(),
            x: 2000.0,
            y: 2000.0,
            rotation: Default::default(),
        },
    );
    assert_eq!(ack.rejection.map(|r| r.constraint), Some(Constraint::LayoutConflict));
    let (ack, _) = g.apply(
        "bad-ref",
        &OperatorCommand::AddModule {
            module_id: "p9".into(),
            descriptor_ref: "nope.json".into(),
            x: 2000.0,
            y: 0.0,
            rotation: Default::default(),
        },
    );
    assert_eq!(ack.rejection.map(|r| r.constraint), Some(Constraint::UnknownEntity));
    let (ack, _) = g.apply(
        "ok",
        &OperatorCommand::AddModule {
            module_id: "p9".into(),
            descriptor_ref: "descriptors/portal.json".into(),
            x: 2000.0,
            y: 0.0,
            rotation: Default::default(),
        },
    );
    assert!(ack.accepted, "{ack:?}");
    step(&mut g, 1_000);
    assert!(g.snapshot().module("p9").is_some());
    // One relation per portal once the second portal is in.
    let portals: Vec<_> = ["r1", "r2"].iter().map(|r| g.snapshot().route_for(r).unwrap().path[2].clone()).collect();
    assert!(portals.contains(&"p9".into()) && portals.contains(&"portal1".into()), "{portals:?}");
}

#[test]
fn failover_flips_coordinator_flag_in_one_delta() {
    let mut g = Gateway::new(&scenario("demonstrator"), true, 1.0).unwrap();
    step(&mut g, 2_399_000);
    let old = g.snapshot().modules.iter().find(|m| m.is_active_coordinator).unwrap().module_id.clone();
    let mut client = g.snapshot().clone();
    let mut saw_flip = false;
    for _ in 0..60 {
        let (_, d) = g.apply("s", &OperatorCommand::Step { ms: 100 });
        if let Some(d) = d {
            client.apply(&d).unwrap();
            let active: Vec<_> = client.modules.iter().filter(|m| m.is_active_coordinator).collect();
            assert!(active.len() <= 1);
            if active.len() == 1 && active[0].module_id != old {
                saw_flip = true;
            }
        }
    }
    assert!(saw_flip);
    assert_eq!(client.modules.iter().filter(|m| m.is_active_coordinator).count(), 1);
}

#[test]
fn rate_and_strategy_commands() {
    let mut g = Gateway::new(&scenario("diamond"), true, 1.0).unwrap();
    let (ack, _) = g.apply("r", &OperatorCommand::SetRate { rate: 0.0 });
    assert_eq!(ack.rejection.map(|r| r.constraint), Some(Constraint::InvalidCommand));
    let (ack, _) = g.apply("r", &OperatorCommand::SetRate { rate: 4.0 });
    assert!(ack.accepted && g.clock().rate == 4.0);
    let (_, d) = g.apply("s", &OperatorCommand::SetStrategy { strategy: amfs_core::sim::Strategy::StaticFixed });
    assert_eq!(d.and_then(|d| d.strategy).as_deref(), Some("static_fixed"));
    g.apply("go", &OperatorCommand::Resume);
    assert!(!g.clock().paused);
    g.tick(Duration::from_millis(500));
    assert_eq!(g.simulation().now(), SimTime::from_millis(2_000));
}

// ---- over the wire ----

fn connect(server: &Server) -> TcpStream {
    let s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    s
}

fn recv(s: &mut TcpStream) -> Message {
    read_message(s).unwrap().expect("message")
}

#[test]
fn wire_session_hello_snapshot_command_ack_and_deltas() {
    let gateway = Gateway::new(&scenario("diamond"), true, 1.0).unwrap();
    let server = Server::start(TcpListener::bind("127.0.0.1:0").unwrap(), gateway).unwrap();
    let mut a = connect(&server);
    write_message(&mut a, &Message::Hello { peer: "test".into() }).unwrap();
    assert!(matches!(recv(&mut a), Message::Hello { .. }));

    write_message(&mut a, &Message::Subscribe).unwrap();
    let Message::Snapshot { snapshot } = recv(&mut a) else { panic!("expected snapshot") };
    let mut view = *snapshot;

    write_message(&mut a, &Message::Command { command_id: "c-1".into(), command: OperatorCommand::Step { ms: 5_000 } })
        .unwrap();
    let Message::Ack { ack } = recv(&mut a) else { panic!("expected ack") };
    assert_eq!(ack.command_id, "c-1");
    assert!(ack.accepted);
    let Message::Delta { delta } = recv(&mut a) else { panic!("expected delta") };
    view.apply(&delta).unwrap();
    assert_eq!(view.sim_time, SimTime::from_millis(5_000));

    // A second client sees the same state and its own acks only.
    let mut b = connect(&server);
    write_message(&mut b, &Message::SnapshotRequest).unwrap();
    let Message::Snapshot { snapshot } = recv(&mut b) else { panic!("expected snapshot") };
    assert_eq!(*snapshot, view);
    write_message(
        &mut b,
        &Message::Command {
            command_id: "c-2".into(),
            command: OperatorCommand::RemoveModule { module_id: "nowhere".into() },
        },
    )
    .unwrap();
    let Message::Ack { ack } = recv(&mut b) else { panic!("expected ack") };
    assert_eq!((ack.command_id.as_str(), ack.accepted), ("c-2", false));
    drop(b);

    write_message(&mut a, &Message::Command { command_id: "c-3".into(), command: OperatorCommand::Step { ms: 100 } })
        .unwrap();
    let Message::Ack { ack } = recv(&mut a) else { panic!("expected ack") };
    assert_eq!(ack.command_id, "c-3");
    assert_eq!(server.with_gateway(|g| g.simulation().now()), SimTime::from_millis(5_100));
    server.stop();
}

#[test]
fn protocol_violations_get_an_error_and_a_closed_connection() {
    let gateway = Gateway::new(&scenario("diamond"), true, 1.0).unwrap();
    let server = Server::start(TcpListener::bind("127.0.0.1:0").unwrap(), gateway).unwrap();

    let mut s = connect(&server);
    let body = br#"{"protocol_version":7,"kind":"subscribe"}"#;
    s.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
    s.write_all(body).unwrap();
    assert!(matches!(recv(&mut s), Message::Error { .. }));
    assert!(read_message(&mut s).map(|m| m.is_none()).unwrap_or(true));

    let mut s = connect(&server);
    s.write_all(&encode(&Message::Error { message: "hi".into() }).unwrap()).unwrap();
    assert!(matches!(recv(&mut s), Message::Error { .. }));

    // The gateway keeps serving other clients.
    let mut ok = connect(&server);
    write_message(&mut ok, &Message::SnapshotRequest).unwrap();
    assert!(matches!(recv(&mut ok), Message::Snapshot { .. }));
    server.stop();
}
