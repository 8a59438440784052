use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::ids::ModuleId;
use crate::model::{AbilityKind, ModuleDescriptor};
use crate::routing::{MaterialFlowRelation, RouteSet, RoutingError, Traversal, CAPACITY_EPS};
use crate::time::secs_to_millis;
use crate::topology::{Endpoint, Topology};

/// Every way through a module: each internal link forward, and backward when reversible.
pub fn traversals_of(descriptor: &ModuleDescriptor) -> Vec<Traversal> {
    let mut out = Vec::new();
    for (idx, link) in descriptor.internal_links.iter().enumerate() {
        let base = Traversal {
            module_id: descriptor.module_id.clone(),
            entry: link.from_interface.clone(),
            exit: link.to_interface.clone(),
            link: idx,
            forward: true,
            process_time_ms: secs_to_millis(link.process_time).max(1),
            reversible: link.reversible,
            concurrent_tus: link.concurrent_tus(),
        };
        if link.reversible {
            out.push(Traversal {
                entry: link.to_interface.clone(),
                exit: link.from_interface.clone(),
                forward: false,
                ..base.clone()
            });
        }
        out.push(base);
    }
    out.sort();
    out
}

/// The part of the traversal graph a relation may use.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleSubgraph {
    /// Operational modules of the topology.
    pub modules: BTreeSet<ModuleId>,
    /// Traversals with enough residual capacity, sorted.
    pub nodes: Vec<Traversal>,
    /// `arcs[i]` holds the indices of nodes reachable from node `i`, ascending.
    pub arcs: Vec<Vec<usize>>,
    /// Node indices a TU may start with, per module, when that module is a source.
    pub entries: BTreeMap<ModuleId, Vec<usize>>,
    /// Node indices that end at a system exit, per module.
    pub exits: BTreeMap<ModuleId, Vec<usize>>,
    /// Modules able to serve as both source and sink of one relation.
    pub self_capable: BTreeSet<ModuleId>,
}

impl FeasibleSubgraph {
    /// Directed module-to-module arcs present in the subgraph.
    pub fn module_arcs(&self) -> BTreeSet<(ModuleId, ModuleId)> {
        self.arcs
            .iter()
            .enumerate()
            .flat_map(|(i, succ)| {
                succ.iter().map(move |&j| (self.nodes[i].module_id.clone(), self.nodes[j].module_id.clone()))
            })
            .collect()
    }
}

/// Restricts the topology to operational modules and to links whose residual capacity covers the relation.
pub fn feasible_subgraph(
    topology: &Topology,
    route_set: &RouteSet,
    relation: &MaterialFlowRelation,
) -> FeasibleSubgraph {
    build_subgraph(topology, |t| {
        route_set.residual(topology, &t.link_key()) + CAPACITY_EPS >= relation.required_throughput
    })
}

pub(crate) fn build_subgraph(topology: &Topology, keep: impl Fn(&Traversal) -> bool) -> FeasibleSubgraph {
    let modules: BTreeSet<ModuleId> =
        topology.modules().iter().filter(|(_, m)| m.status.is_operational()).map(|(id, _)| id.clone()).collect();

    let mut nodes: Vec<Traversal> =
        modules.iter().flat_map(|id| traversals_of(&topology.modules()[id].descriptor)).filter(|t| keep(t)).collect();
    nodes.sort();

    let mut by_entry: BTreeMap<Endpoint, Vec<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        by_entry.entry(Endpoint::new(n.module_id.clone(), n.entry.clone())).or_default().push(i);
    }

    let arcs = nodes
        .iter()
        .map(|n| {
            let exit = Endpoint::new(n.module_id.clone(), n.exit.clone());
            let mut succ: Vec<usize> = topology
                .connection_at(&exit)
                .and_then(|c| c.exit_through(&exit))
                .filter(|next| modules.contains(&next.module_id))
                .and_then(|next| by_entry.get(next))
                .cloned()
                .unwrap_or_default();
            succ.sort_unstable();
            succ
        })
        .collect();

    let mut entries: BTreeMap<ModuleId, Vec<usize>> = BTreeMap::new();
    let mut exits: BTreeMap<ModuleId, Vec<usize>> = BTreeMap::new();
    for id in &modules {
        let descriptor = &topology.modules()[id].descriptor;
        let own: Vec<usize> = (0..nodes.len()).filter(|&i| &nodes[i].module_id == id).collect();
        let is_boundary = |iface: &crate::ids::InterfaceId, inbound: bool| {
            let ep = Endpoint::new(id.clone(), iface.clone());
            topology.connection_at(&ep).is_none()
                && descriptor.interface(iface).is_some_and(|i| {
                    if inbound {
                        i.flow.accepts_inbound()
                    } else {
                        i.flow.accepts_outbound()
                    }
                })
        };
        let boundary_in: Vec<usize> = own.iter().copied().filter(|&i| is_boundary(&nodes[i].entry, true)).collect();
        let boundary_out: Vec<usize> = own.iter().copied().filter(|&i| is_boundary(&nodes[i].exit, false)).collect();
        // Modules without a free port fall back to any traversal.
        entries.insert(id.clone(), if boundary_in.is_empty() { own.clone() } else { boundary_in });
        exits.insert(id.clone(), if boundary_out.is_empty() { own } else { boundary_out });
    }

    let self_capable = modules
        .iter()
        .filter(|id| topology.modules()[*id].descriptor.abilities.iter().any(|a| a.kind != AbilityKind::Transport))
        .cloned()
        .collect();

    FeasibleSubgraph { modules, nodes, arcs, entries, exits, self_capable }
}

/// A concrete way through the system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutePath {
    pub hops: Vec<Traversal>,
    /// Sum of traversal times before the sink, milliseconds.
    pub cost_ms: u64,
}

impl RoutePath {
    pub fn modules(&self) -> Vec<ModuleId> {
        self.hops.iter().map(|h| h.module_id.clone()).collect()
    }

    pub fn cost_secs(&self) -> f64 {
        self.cost_ms as f64 / 1000.0
    }

    /// Total time through every module including the sink, milliseconds.
    pub fn traversal_ms(&self) -> u64 {
        self.hops.iter().map(|h| h.process_time_ms).sum()
    }
}

/// Dijkstra over the subgraph with labels `(cost, module sequence, node sequence)`, so
/// equally fast paths resolve to the lexicographically smallest module-id sequence.
pub fn shortest_process_time_path(
    subgraph: &FeasibleSubgraph,
    source: &ModuleId,
    sink: &ModuleId,
) -> Result<Option<RoutePath>, RoutingError> {
    if !subgraph.modules.contains(source) {
        return Err(RoutingError::SourceAbsent(source.clone()));
    }
    if !subgraph.modules.contains(sink) {
        return Err(RoutingError::SinkAbsent(sink.clone()));
    }
    if source == sink {
        if !subgraph.self_capable.contains(source) {
            return Ok(None);
        }
        let fastest = subgraph.entries[source].iter().copied().min_by_key(|&i| (subgraph.nodes[i].process_time_ms, i));
        return Ok(fastest.map(|i| RoutePath { hops: vec![subgraph.nodes[i].clone()], cost_ms: 0 }));
    }

    // Module ranks follow id order, so comparing rank sequences compares id sequences.
    let rank: BTreeMap<&ModuleId, usize> = subgraph.modules.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let node_rank: Vec<usize> = subgraph.nodes.iter().map(|n| rank[&n.module_id]).collect();
    let targets: BTreeSet<usize> = subgraph.exits[sink].iter().copied().collect();
    type Label = (u64, Vec<usize>, Vec<usize>);
    let mut best: Vec<Option<Label>> = vec![None; subgraph.nodes.len()];
    let mut settled = vec![false; subgraph.nodes.len()];
    let mut heap = BinaryHeap::new();
    for &i in &subgraph.entries[source] {
        let label = (0u64, vec![node_rank[i]], vec![i]);
        if best[i].as_ref().is_none_or(|b| label < *b) {
            best[i] = Some(label.clone());
            heap.push(Reverse(label));
        }
    }

    while let Some(Reverse((cost, modules, path))) = heap.pop() {
        let node = *path.last().expect("labels are nonempty");
        if settled[node] {
            continue;
        }
        settled[node] = true;
        if targets.contains(&node) {
            let mut seen = BTreeSet::new();
            if !modules.iter().all(|m| seen.insert(*m)) {
                // The cheapest walk revisits a module; only simple paths are routable.
                return Ok(simple_path_search(subgraph, source, &targets, &node_rank));
            }
            let hops = path.iter().map(|&i| subgraph.nodes[i].clone()).collect();
            return Ok(Some(RoutePath { hops, cost_ms: cost }));
        }
        // Passing through the sink before its exit is not a delivery; keep expanding.
        let next_cost = cost + subgraph.nodes[node].process_time_ms;
        for &succ in &subgraph.arcs[node] {
            if settled[succ] {
                continue;
            }
            let mut next_modules = modules.clone();
            next_modules.push(node_rank[succ]);
            let mut next_path = path.clone();
            next_path.push(succ);
            let candidate = (next_cost, next_modules, next_path);
            if best[succ].as_ref().is_none_or(|b| candidate < *b) {
                best[succ] = Some(candidate.clone());
                heap.push(Reverse(candidate));
            }
        }
    }
    Ok(None)
}

/// Exhaustive branch-and-bound over paths that visit each module at most once.
fn simple_path_search(
    subgraph: &FeasibleSubgraph,
    source: &ModuleId,
    targets: &BTreeSet<usize>,
    node_rank: &[usize],
) -> Option<RoutePath> {
    type Label = (u64, Vec<usize>, Vec<usize>);
    struct Search<'a> {
        sg: &'a FeasibleSubgraph,
        targets: &'a BTreeSet<usize>,
        node_rank: &'a [usize],
        sink_rank: Option<usize>,
        best: Option<Label>,
    }
    impl Search<'_> {
        fn visit(&mut self, cost: u64, modules: &mut Vec<usize>, path: &mut Vec<usize>) {
            if self.best.as_ref().is_some_and(|b| cost > b.0) {
                return;
            }
            let node = *path.last().expect("nonempty");
            if self.targets.contains(&node) {
                let label = (cost, modules.clone(), path.clone());
                if self.best.as_ref().is_none_or(|b| label < *b) {
                    self.best = Some(label);
                }
                return;
            }
            if Some(self.node_rank[node]) == self.sink_rank {
                return;
            }
            let next = cost + self.sg.nodes[node].process_time_ms;
            for &succ in &self.sg.arcs[node] {
                let m = self.node_rank[succ];
                if modules.contains(&m) {
                    continue;
                }
                modules.push(m);
                path.push(succ);
                self.visit(next, modules, path);
                path.pop();
                modules.pop();
            }
        }
    }
    let sink_rank = targets.iter().next().map(|&t| node_rank[t]);
    let mut search = Search { sg: subgraph, targets, node_rank, sink_rank, best: None };
    for &start in &subgraph.entries[source] {
        search.visit(0, &mut vec![node_rank[start]], &mut vec![start]);
    }
    search.best.map(|(cost_ms, _, path)| RoutePath {
        hops: path.iter().map(|&i| subgraph.nodes[i].clone()).collect(),
        cost_ms,
    })
}
