//! Exact terminal-distance minor.
//!
//! The reduced graph keeps only vertices and edges lying on some canonical
//! shortest path between two terminals, then suppresses every non-terminal
//! of degree two by merging its two edges into one (parallel edges keep the
//! lighter weight). Both steps preserve every terminal distance. They are
//! repeated until nothing changes, so running the reduction on its own
//! output is a no-op.
//!
//! With a consistent shortest-path system two canonical paths share at most
//! one contiguous stretch, which bounds the surviving branch vertices by
//! `k^4`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, Instance, VertexId, WeightedGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("terminal pair ({i}, {j}): original distance {original}, minor distance {minor}")]
    VerificationFailed { i: usize, j: usize, original: f64, minor: f64 },
    #[error("minor keeps {non_terminals} non-terminals, above the bound {bound}")]
    SizeBoundExceeded { non_terminals: usize, bound: usize },
    #[error("minor terminal set does not match the instance")]
    TerminalMismatch,
    #[error("cannot replay step {step}: {reason}")]
    Replay { step: usize, reason: String },
}

/// One minor operation, in original vertex ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MinorOp {
    /// Remove an isolated vertex.
    DeleteVertex { vertex: VertexId },
    /// Remove one edge `{u, v}` carrying exactly `weight`.
    DeleteEdge { u: VertexId, v: VertexId, weight: f64 },
    /// Contract `{keep, absorbed}` where `absorbed` has exactly two incident
    /// edges; its other edge `{absorbed, x}` becomes `{keep, x}` with the
    /// two weights summed.
    ContractEdge { keep: VertexId, absorbed: VertexId },
}

#[derive(Debug, Clone)]
pub struct PreprocessResult {
    /// Reduced instance; retained vertices are renumbered in increasing
    /// original id and terminals keep their order.
    pub minor: Instance,
    /// Original vertex -> minor vertex, `None` when dropped.
    pub vertex_map: Vec<Option<VertexId>>,
    pub contraction_log: Vec<MinorOp>,
    /// Number of prune/suppress passes until the fixpoint.
    pub passes: usize,
}

impl PreprocessResult {
    pub fn non_terminal_count(&self) -> usize {
        self.minor.non_terminal_count()
    }

    /// Minor vertex -> original vertex.
    pub fn original_ids(&self) -> Vec<VertexId> {
        let mut ids = vec![0; self.minor.vertex_count()];
        for (orig, m) in self.vertex_map.iter().enumerate() {
            if let Some(m) = m {
                ids[*m] = orig;
            }
        }
        ids
    }
}

type Adjacency = BTreeMap<VertexId, BTreeMap<VertexId, f64>>;

fn working_graph(g: &WeightedGraph) -> Adjacency {
    let mut adj: Adjacency = (0..g.vertex_count()).map(|v| (v, BTreeMap::new())).collect();
    for e in g.edges() {
        adj.get_mut(&e.u).unwrap().insert(e.v, e.weight);
        adj.get_mut(&e.v).unwrap().insert(e.u, e.weight);
    }
    adj
}

fn remove_edge(adj: &mut Adjacency, u: VertexId, v: VertexId) -> f64 {
    adj.get_mut(&v).unwrap().remove(&u);
    adj.get_mut(&u).unwrap().remove(&v).expect("edge exists")
}

/// Renumbers the working graph to `0..len` (monotone in original id) and
/// builds a validated graph from it.
fn compact(adj: &Adjacency) -> (WeightedGraph, Vec<VertexId>, BTreeMap<VertexId, VertexId>) {
    let ids: Vec<VertexId> = adj.keys().copied().collect();
    let index: BTreeMap<VertexId, VertexId> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut edges = Vec::new();
    for (&u, nbrs) in adj {
        for (&v, &w) in nbrs {
            if u < v {
                edges.push((index[&u], index[&v], w));
            }
        }
    }
    let g = WeightedGraph::new(ids.len(), edges).expect("working graph stays connected and simple");
    (g, ids, index)
}

/// Drops everything not on a canonical terminal-to-terminal shortest path.
fn prune_to_path_union(adj: &mut Adjacency, terminals: &[VertexId], log: &mut Vec<MinorOp>) -> bool {
    let (g, ids, index) = compact(adj);
    let local_terms: Vec<VertexId> = terminals.iter().map(|t| index[t]).collect();
    let inst = Instance::new(g, local_terms).expect("terminals are distinct");

    let mut keep_vertex = BTreeSet::new();
    let mut keep_edge = BTreeSet::new();
    for i in 0..inst.k() {
        for j in i + 1..inst.k() {
            let path = inst.shortest_path(inst.terminal(i), inst.terminal(j));
            keep_vertex.extend(path.vertices.iter().map(|&v| ids[v]));
            for w in path.vertices.windows(2) {
                let (a, b) = (ids[w[0]], ids[w[1]]);
                keep_edge.insert((a.min(b), a.max(b)));
            }
        }
    }

    let mut doomed_edges = Vec::new();
    for (&u, nbrs) in adj.iter() {
        for (&v, &w) in nbrs {
            if u < v && !keep_edge.contains(&(u, v)) {
                doomed_edges.push((u, v, w));
            }
        }
    }
    let doomed_vertices: Vec<VertexId> = adj.keys().copied().filter(|v| !keep_vertex.contains(v)).collect();

    let changed = !doomed_edges.is_empty() || !doomed_vertices.is_empty();
    for (u, v, weight) in doomed_edges {
        remove_edge(adj, u, v);
        log.push(MinorOp::DeleteEdge { u, v, weight });
    }
    for vertex in doomed_vertices {
        debug_assert!(adj[&vertex].is_empty());
        adj.remove(&vertex);
        log.push(MinorOp::DeleteVertex { vertex });
    }
    changed
}

/// Removes non-terminals of degree at most two until none remain.
fn suppress(adj: &mut Adjacency, is_terminal: &dyn Fn(VertexId) -> bool, log: &mut Vec<MinorOp>) -> bool {
    let mut changed = false;
    loop {
        let victim = adj.iter().find(|(&v, nbrs)| !is_terminal(v) && nbrs.len() <= 2).map(|(&v, _)| v);
        let Some(v) = victim else { break };
        changed = true;
        let nbrs: Vec<(VertexId, f64)> = adj[&v].iter().map(|(&x, &w)| (x, w)).collect();
        match nbrs.as_slice() {
            [] => {}
            [(x, weight)] => {
                remove_edge(adj, v, *x);
                log.push(MinorOp::DeleteEdge { u: v.min(*x), v: v.max(*x), weight: *weight });
            }
            [(a, wa), (b, wb)] => {
                let (a, b) = (*a, *b);
                let merged = wa + wb;
                log.push(MinorOp::ContractEdge { keep: a, absorbed: v });
                remove_edge(adj, v, a);
                remove_edge(adj, v, b);
                match adj[&a].get(&b).copied() {
                    Some(existing) if existing <= merged => {
                        log.push(MinorOp::DeleteEdge { u: a, v: b, weight: merged });
                    }
                    Some(existing) => {
                        log.push(MinorOp::DeleteEdge { u: a, v: b, weight: existing });
                        adj.get_mut(&a).unwrap().insert(b, merged);
                        adj.get_mut(&b).unwrap().insert(a, merged);
                    }
                    None => {
                        adj.get_mut(&a).unwrap().insert(b, merged);
                        adj.get_mut(&b).unwrap().insert(a, merged);
                    }
                }
            }
            _ => unreachable!(),
        }
        adj.remove(&v);
        log.push(MinorOp::DeleteVertex { vertex: v });
    }
    changed
}

/// Reduces `inst` to a minor with identical terminal distances and at most
/// `k^4` non-terminals.
pub fn exact_minor(inst: &Instance) -> PreprocessResult {
    let mut adj = working_graph(inst.graph());
    let is_terminal = |v: VertexId| inst.is_terminal(v);
    let mut log = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        let pruned = prune_to_path_union(&mut adj, inst.terminals(), &mut log);
        let suppressed = suppress(&mut adj, &is_terminal, &mut log);
        if !pruned && !suppressed {
            break;
        }
    }

    let (g, _, index) = compact(&adj);
    let terminals = inst.terminals().iter().map(|t| index[t]).collect();
    let minor = Instance::new(g, terminals).expect("terminals survive reduction");
    let vertex_map = (0..inst.vertex_count()).map(|v| index.get(&v).copied()).collect();
    PreprocessResult { minor, vertex_map, contraction_log: log, passes }
}

/// Applies `log` to `original` and returns the surviving vertices and the
/// sorted edge multiset, both in original ids.
pub fn replay_log(original: &WeightedGraph, log: &[MinorOp]) -> Result<(BTreeSet<VertexId>, Vec<Edge>), PreprocessError> {
    let mut vertices: BTreeSet<VertexId> = (0..original.vertex_count()).collect();
    let mut edges: Vec<Edge> = original.edges().to_vec();
    let norm = |a: VertexId, b: VertexId| (a.min(b), a.max(b));
    for (step, op) in log.iter().enumerate() {
        let fail = |reason: String| PreprocessError::Replay { step, reason };
        match *op {
            MinorOp::DeleteVertex { vertex } => {
                if edges.iter().any(|e| e.u == vertex || e.v == vertex) {
                    return Err(fail(format!("vertex {vertex} still has edges")));
                }
                if !vertices.remove(&vertex) {
                    return Err(fail(format!("vertex {vertex} already gone")));
                }
            }
            MinorOp::DeleteEdge { u, v, weight } => {
                let (u, v) = norm(u, v);
                let pos = edges
                    .iter()
                    .position(|e| e.u == u && e.v == v && e.weight.to_bits() == weight.to_bits())
                    .ok_or_else(|| fail(format!("no edge ({u}, {v}) of weight {weight}")))?;
                edges.remove(pos);
            }
            MinorOp::ContractEdge { keep, absorbed } => {
                let incident: Vec<usize> =
                    (0..edges.len()).filter(|&i| edges[i].u == absorbed || edges[i].v == absorbed).collect();
                if incident.len() != 2 {
                    return Err(fail(format!("vertex {absorbed} has {} incident edges", incident.len())));
                }
                let other_end = |e: &Edge| if e.u == absorbed { e.v } else { e.u };
                let (to_keep, to_other) = match (other_end(&edges[incident[0]]), other_end(&edges[incident[1]])) {
                    (a, _) if a == keep => (incident[0], incident[1]),
                    (_, b) if b == keep => (incident[1], incident[0]),
                    _ => return Err(fail(format!("{absorbed} is not adjacent to {keep}"))),
                };
                let x = other_end(&edges[to_other]);
                let weight = edges[to_keep].weight + edges[to_other].weight;
                let (u, v) = norm(keep, x);
                for i in [to_keep.max(to_other), to_keep.min(to_other)] {
                    edges.remove(i);
                }
                edges.push(Edge { u, v, weight });
            }
        }
    }
    edges.sort_by(|a, b| (a.u, a.v).cmp(&(b.u, b.v)).then(a.weight.total_cmp(&b.weight)));
    Ok((vertices, edges))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub max_abs_deviation: f64,
    pub non_terminals: usize,
    pub size_bound: usize,
    /// Integer weights: deviations must be exactly zero.
    pub exact_arithmetic: bool,
}

/// Recomputes every terminal distance in both graphs and checks equality
/// (bitwise on integer weights, 1e-9 relative otherwise) plus the `k^4`
/// size bound.
pub fn verify_exact(inst: &Instance, result: &PreprocessResult) -> Result<VerifyReport, PreprocessError> {
    let minor = &result.minor;
    if minor.k() != inst.k()
        || (0..inst.k()).any(|j| result.vertex_map[inst.terminal(j)] != Some(minor.terminal(j)))
    {
        return Err(PreprocessError::TerminalMismatch);
    }
    let exact = inst.graph().has_integer_weights();
    let mut max_dev: f64 = 0.0;
    for i in 0..inst.k() {
        for j in i + 1..inst.k() {
            let original = inst.terminal_distance(i, j);
            let reduced = minor.terminal_distance(i, j);
            let dev = (original - reduced).abs();
            let ok = if exact { dev == 0.0 } else { dev <= 1e-9 * original };
            if !ok {
                return Err(PreprocessError::VerificationFailed { i, j, original, minor: reduced });
            }
            max_dev = max_dev.max(dev);
        }
    }
    let size_bound = inst.k().pow(4);
    let non_terminals = minor.non_terminal_count();
    if non_terminals > size_bound {
        return Err(PreprocessError::SizeBoundExceeded { non_terminals, bound: size_bound });
    }
    Ok(VerifyReport { max_abs_deviation: max_dev, non_terminals, size_bound, exact_arithmetic: exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: usize, edges: &[(usize, usize, f64)], terms: &[usize]) -> Instance {
        Instance::new(WeightedGraph::new(n, edges.iter().copied()).unwrap(), terms.to_vec()).unwrap()
    }

    #[test]
    fn path_collapses_to_single_edge() {
        let i = inst(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], &[0, 3]);
        let r = exact_minor(&i);
        assert_eq!(r.minor.vertex_count(), 2);
        assert_eq!(r.minor.graph().edges(), &[Edge { u: 0, v: 1, weight: 3.0 }]);
        assert_eq!(r.vertex_map, vec![Some(0), None, None, Some(1)]);
        let rep = verify_exact(&i, &r).unwrap();
        assert_eq!((rep.max_abs_deviation, rep.non_terminals), (0.0, 0));
    }

    #[test]
    fn star_keeps_its_center() {
        let i = inst(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], &[1, 2, 3]);
        let r = exact_minor(&i);
        assert_eq!(r.non_terminal_count(), 1);
        for a in 0..3 {
            for b in a + 1..3 {
                assert_eq!(r.minor.terminal_distance(a, b), 2.0);
            }
        }
        let rep = verify_exact(&i, &r).unwrap();
        assert_eq!(rep.non_terminals, 1);
        assert_eq!(rep.size_bound, 81);
    }

    #[test]
    fn two_terminals_reduce_to_one_edge() {
        let i = inst(
            6,
            &[(0, 1, 2.0), (1, 2, 2.0), (0, 3, 1.0), (3, 4, 1.0), (4, 2, 3.0), (2, 5, 1.0), (1, 5, 7.0)],
            &[0, 5],
        );
        let r = exact_minor(&i);
        assert_eq!(r.minor.vertex_count(), 2);
        assert_eq!(r.minor.graph().edges()[0].weight, i.terminal_distance(0, 1));
    }

    #[test]
    fn opposite_tie_breaks_create_parallel_edges_that_collapse() {
        // Two equal routes between 1 and 2: 1-3-6-2 and 1-5-4-2. Leaving 1 the
        // lexicographic rule picks the first, leaving 2 it picks the second,
        // so both survive pruning and become parallel 1-2 edges.
        let i = inst(
            10,
            &[
                (0, 1, 1.0), (1, 3, 1.0), (3, 6, 1.0), (6, 2, 1.0), (1, 5, 1.0),
                (5, 4, 1.0), (4, 2, 1.0), (2, 7, 1.0), (2, 8, 1.0), (1, 9, 1.0),
            ],
            &[0, 7, 8, 9],
        );
        let r = exact_minor(&i);
        assert!(r.contraction_log.iter().any(|op| matches!(op, MinorOp::DeleteEdge { u: 1, v: 2, weight } if *weight == 3.0)));
        assert_eq!(r.minor.vertex_count(), 6);
        assert_eq!(r.non_terminal_count(), 2);
        let r = exact_minor(&i);
        verify_exact(&i, &r).unwrap();
        let (vs, es) = replay_log(i.graph(), &r.contraction_log).unwrap();
        let ids = r.original_ids();
        assert_eq!(vs, ids.iter().copied().collect());
        let mut mapped: Vec<Edge> = r
            .minor
            .graph()
            .edges()
            .iter()
            .map(|e| Edge { u: ids[e.u], v: ids[e.v], weight: e.weight })
            .collect();
        mapped.sort_by_key(|a| (a.u, a.v));
        assert_eq!(es, mapped);
    }

    #[test]
    fn tampered_minor_fails_verification() {
        let i = inst(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], &[1, 2, 3]);
        let mut r = exact_minor(&i);
        let g = r.minor.graph();
        let mut edges: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.u, e.v, e.weight)).collect();
        edges[0].2 += 1.0;
        let g2 = WeightedGraph::new(g.vertex_count(), edges).unwrap();
        r.minor = Instance::new(g2, r.minor.terminals().to_vec()).unwrap();
        assert!(matches!(verify_exact(&i, &r), Err(PreprocessError::VerificationFailed { .. })));
    }

    #[test]
    fn replay_rejects_bogus_log() {
        let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let err = replay_log(&g, &[MinorOp::DeleteVertex { vertex: 1 }]).unwrap_err();
        assert!(matches!(err, PreprocessError::Replay { step: 0, .. }));
        let err = replay_log(&g, &[MinorOp::ContractEdge { keep: 0, absorbed: 2 }]).unwrap_err();
        assert!(matches!(err, PreprocessError::Replay { .. }));
    }

    #[test]
    fn reduction_is_idempotent() {
        let i = inst(
            7,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (1, 4, 2.0), (4, 5, 1.0), (5, 6, 1.0), (2, 5, 1.0)],
            &[0, 3, 6],
        );
        let once = exact_minor(&i);
        let twice = exact_minor(&once.minor);
        assert_eq!(once.minor, twice.minor);
        assert!(twice.contraction_log.is_empty());
    }
}
