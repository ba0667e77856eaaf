//! Undirected positive-weight graphs, canonical shortest paths and
//! restricted-ball queries.
//!
//! Shortest paths are made unique by ordering candidate paths on
//! `(length, hop count, vertex sequence)` lexicographically. That order is
//! consistent: every subpath of a canonical path is itself canonical.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VertexId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("vertex {vertex} out of range for a graph with {vertex_count} vertices")]
    VertexOutOfRange { vertex: VertexId, vertex_count: usize },
    #[error("edge ({u}, {v}) has non-positive or non-finite weight {weight}")]
    NonPositiveWeight { u: VertexId, v: VertexId, weight: f64 },
    #[error("self-loop at vertex {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: VertexId, v: VertexId },
    #[error("graph is disconnected: vertex {unreachable} is not reachable from vertex 0")]
    Disconnected { unreachable: VertexId },
    #[error("an instance needs at least 2 terminals, got {0}")]
    TooFewTerminals(usize),
    #[error("terminal {0} listed more than once")]
    DuplicateTerminal(VertexId),
    #[error("center {0} is not in the allowed vertex set")]
    CenterNotAllowed(VertexId),
    #[error("vertex {0} is a terminal")]
    IsTerminal(VertexId),
}

/// An undirected edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub weight: f64,
}

/// Connected, simple, undirected graph with strictly positive finite weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    vertex_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(VertexId, f64)>>,
}

impl WeightedGraph {
    /// Validates and builds a graph. Edges are normalized to `u < v` and
    /// sorted; adjacency lists are sorted by neighbor id.
    pub fn new(
        vertex_count: usize,
        edge_list: impl IntoIterator<Item = (VertexId, VertexId, f64)>,
    ) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for (a, b, weight) in edge_list {
            for x in [a, b] {
                if x >= vertex_count {
                    return Err(GraphError::VertexOutOfRange { vertex: x, vertex_count });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::NonPositiveWeight { u: a, v: b, weight });
            }
            edges.push(Edge { u: a.min(b), v: a.max(b), weight });
        }
        if edges.is_empty() {
            return Err(GraphError::EmptyEdgeList);
        }
        edges.sort_by_key(|x| (x.u, x.v));
        if let Some(w) = edges.windows(2).find(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(GraphError::DuplicateEdge { u: w[0].u, v: w[0].v });
        }

        let mut adjacency = vec![Vec::new(); vertex_count];
        for e in &edges {
            adjacency[e.u].push((e.v, e.weight));
            adjacency[e.v].push((e.u, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(x, _)| x);
        }

        let graph = WeightedGraph { vertex_count, edges, adjacency };
        if let Some(unreachable) = graph.first_unreachable_from_zero() {
            return Err(GraphError::Disconnected { unreachable });
        }
        Ok(graph)
    }

    fn first_unreachable_from_zero(&self) -> Option<VertexId> {
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges sorted by `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` sorted by id, with edge weights.
    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v].len()
    }

    pub fn edge_weight(&self, u: VertexId, v: VertexId) -> Option<f64> {
        let list = &self.adjacency[u];
        list.binary_search_by_key(&v, |&(x, _)| x).ok().map(|i| list[i].1)
    }

    /// True if every edge weight is an integer, in which case all path
    /// sums below 2^53 are exact.
    pub fn has_integer_weights(&self) -> bool {
        self.edges.iter().all(|e| e.weight.fract() == 0.0)
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), GraphError> {
        if v >= self.vertex_count {
            Err(GraphError::VertexOutOfRange { vertex: v, vertex_count: self.vertex_count })
        } else {
            Ok(())
        }
    }
}

/// A canonical shortest path from `vertices[0]` to its last vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortestPath {
    pub vertices: Vec<VertexId>,
    pub length: f64,
}

impl ShortestPath {
    pub fn source(&self) -> VertexId {
        self.vertices[0]
    }

    pub fn target(&self) -> VertexId {
        *self.vertices.last().expect("path is never empty")
    }

    pub fn hops(&self) -> usize {
        self.vertices.len() - 1
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    hops: usize,
    vertex: VertexId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.hops.cmp(&self.hops))
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical shortest-path tree rooted at one source.
///
/// `parent[v]` is the predecessor of `v` on the canonical path from the
/// source, so walking parents from any target reproduces that path.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    source: VertexId,
    dist: Vec<f64>,
    hops: Vec<usize>,
    parent: Vec<Option<VertexId>>,
}

impl ShortestPathTree {
    pub fn build(g: &WeightedGraph, source: VertexId) -> Self {
        let n = g.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut hops = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        hops[source] = 0;
        heap.push(HeapEntry { dist: 0.0, hops: 0, vertex: source });
        while let Some(HeapEntry { vertex: u, .. }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &(v, w) in g.neighbors(u) {
                let nd = dist[u] + w;
                let nh = hops[u] + 1;
                if nd < dist[v] || (nd == dist[v] && nh < hops[v]) {
                    dist[v] = nd;
                    hops[v] = nh;
                    heap.push(HeapEntry { dist: nd, hops: nh, vertex: v });
                }
            }
        }

        // Among tight predecessors pick the one whose own canonical path is
        // lexicographically smallest. Paths at equal hop level have equal
        // length, so ranking each level by (parent rank, vertex id) orders
        // the full vertex sequences.
        let max_hops = hops.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); max_hops + 1];
        for v in 0..n {
            levels[hops[v]].push(v);
        }
        let mut rank = vec![0usize; n];
        let mut parent = vec![None; n];
        for level in levels.iter_mut().skip(1) {
            let mut keyed = Vec::with_capacity(level.len());
            for &v in level.iter() {
                let p = g
                    .neighbors(v)
                    .iter()
                    .filter(|&&(u, w)| hops[u] + 1 == hops[v] && dist[u] + w == dist[v])
                    .map(|&(u, _)| u)
                    .min_by_key(|&u| rank[u])
                    .expect("every reached vertex has a tight predecessor");
                parent[v] = Some(p);
                keyed.push((rank[p], v));
            }
            keyed.sort_unstable();
            for (r, &(_, v)) in keyed.iter().enumerate() {
                rank[v] = r;
            }
        }
        ShortestPathTree { source, dist, hops, parent }
    }

    pub fn source(&self) -> VertexId {
        self.source
    }

    pub fn distance(&self, target: VertexId) -> f64 {
        self.dist[target]
    }

    pub fn hops(&self, target: VertexId) -> usize {
        self.hops[target]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.parent[v]
    }

    pub fn path_to(&self, target: VertexId) -> ShortestPath {
        let mut vertices = vec![target];
        let mut cur = target;
        while let Some(p) = self.parent[cur] {
            vertices.push(p);
            cur = p;
        }
        vertices.reverse();
        ShortestPath { vertices, length: self.dist[target] }
    }
}

/// Canonical shortest path from `s` to `t`.
pub fn shortest_path(g: &WeightedGraph, s: VertexId, t: VertexId) -> Result<ShortestPath, GraphError> {
    g.check_vertex(s)?;
    g.check_vertex(t)?;
    Ok(ShortestPathTree::build(g, s).path_to(t))
}

pub fn distance(g: &WeightedGraph, s: VertexId, t: VertexId) -> Result<f64, GraphError> {
    Ok(shortest_path(g, s, t)?.length)
}

/// Dijkstra from `center` inside the subgraph induced by `allowed`,
/// stopping at `radius`. Returns `(vertex, distance)` in settle order,
/// ties broken by vertex id.
pub(crate) fn restricted_dijkstra(
    g: &WeightedGraph,
    allowed: impl Fn(VertexId) -> bool,
    center: VertexId,
    radius: f64,
) -> Vec<(VertexId, f64)> {
    let n = g.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut settled = Vec::new();
    dist[center] = 0.0;
    heap.push(HeapEntry { dist: 0.0, hops: 0, vertex: center });
    while let Some(HeapEntry { dist: d, vertex: u, .. }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        settled.push((u, d));
        for &(v, w) in g.neighbors(u) {
            let nd = d + w;
            if nd <= radius && nd < dist[v] && allowed(v) {
                dist[v] = nd;
                heap.push(HeapEntry { dist: nd, hops: 0, vertex: v });
            }
        }
    }
    settled
}

/// `{v ∈ allowed : dist_{G[allowed]}(center, v) ≤ radius}`, sorted by id.
pub fn restricted_ball(
    g: &WeightedGraph,
    allowed: &[VertexId],
    center: VertexId,
    radius: f64,
) -> Result<Vec<VertexId>, GraphError> {
    g.check_vertex(center)?;
    let mut mask = vec![false; g.vertex_count()];
    for &v in allowed {
        g.check_vertex(v)?;
        mask[v] = true;
    }
    if !mask[center] {
        return Err(GraphError::CenterNotAllowed(center));
    }
    let mut ball: Vec<VertexId> =
        restricted_dijkstra(g, |v| mask[v], center, radius).into_iter().map(|(v, _)| v).collect();
    ball.sort_unstable();
    Ok(ball)
}

/// A graph together with an ordered terminal set. Terminal `j` is
/// `terminals()[j]` for the lifetime of the instance.
///
/// Shortest-path trees are computed lazily per source and cached, so an
/// `Instance` can be shared across threads running independent trials.
#[derive(Debug, Clone)]
pub struct Instance {
    graph: WeightedGraph,
    terminals: Vec<VertexId>,
    terminal_index: Vec<Option<usize>>,
    trees: Vec<OnceLock<ShortestPathTree>>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.graph == other.graph && self.terminals == other.terminals
    }
}

impl Instance {
    pub fn new(graph: WeightedGraph, terminals: Vec<VertexId>) -> Result<Self, GraphError> {
        if terminals.len() < 2 {
            return Err(GraphError::TooFewTerminals(terminals.len()));
        }
        let n = graph.vertex_count();
        let mut terminal_index = vec![None; n];
        for (j, &t) in terminals.iter().enumerate() {
            graph.check_vertex(t)?;
            if terminal_index[t].is_some() {
                return Err(GraphError::DuplicateTerminal(t));
            }
            terminal_index[t] = Some(j);
        }
        let trees = (0..n).map(|_| OnceLock::new()).collect();
        Ok(Instance { graph, terminals, terminal_index, trees })
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn terminals(&self) -> &[VertexId] {
        &self.terminals
    }

    pub fn terminal(&self, j: usize) -> VertexId {
        self.terminals[j]
    }

    pub fn k(&self) -> usize {
        self.terminals.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    /// Index `j` such that `v` is terminal `t_j`.
    pub fn terminal_index(&self, v: VertexId) -> Option<usize> {
        self.terminal_index[v]
    }

    pub fn is_terminal(&self, v: VertexId) -> bool {
        self.terminal_index[v].is_some()
    }

    pub fn non_terminal_count(&self) -> usize {
        self.vertex_count() - self.k()
    }

    pub fn non_terminals(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count()).filter(|&v| !self.is_terminal(v))
    }

    pub fn tree(&self, source: VertexId) -> &ShortestPathTree {
        self.trees[source].get_or_init(|| ShortestPathTree::build(&self.graph, source))
    }

    pub fn distance(&self, s: VertexId, t: VertexId) -> f64 {
        self.tree(s).distance(t)
    }

    pub fn shortest_path(&self, s: VertexId, t: VertexId) -> ShortestPath {
        self.tree(s).path_to(t)
    }

    /// `dist_G(t_i, t_j)` for terminal indices.
    pub fn terminal_distance(&self, i: usize, j: usize) -> f64 {
        self.distance(self.terminals[i], self.terminals[j])
    }

    /// Nearest terminal to a non-terminal `v` and its distance `D_v`;
    /// ties go to the smaller terminal index.
    pub fn nearest_terminal_distance(&self, v: VertexId) -> Result<(usize, f64), GraphError> {
        self.graph.check_vertex(v)?;
        if self.is_terminal(v) {
            return Err(GraphError::IsTerminal(v));
        }
        let tree = self.tree(v);
        let best = (0..self.k())
            .map(|j| (j, tree.distance(self.terminals[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("k >= 2");
        Ok(best)
    }

    /// `(nearest terminal index, D_v)` for every vertex in one multi-source
    /// pass. Terminals map to themselves at distance 0.
    pub fn nearest_terminals(&self) -> Vec<(usize, f64)> {
        let n = self.vertex_count();
        let mut label = vec![(usize::MAX, f64::INFINITY); n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for (j, &t) in self.terminals.iter().enumerate() {
            label[t] = (j, 0.0);
            // hops slot carries the terminal index as the secondary key
            heap.push(HeapEntry { dist: 0.0, hops: j, vertex: t });
        }
        while let Some(HeapEntry { dist: d, hops: j, vertex: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &(v, w) in self.graph.neighbors(u) {
                let nd = d + w;
                let (lj, ld) = label[v];
                if nd < ld || (nd == ld && j < lj) {
                    label[v] = (j, nd);
                    heap.push(HeapEntry { dist: nd, hops: j, vertex: v });
                }
            }
        }
        label
    }
}
