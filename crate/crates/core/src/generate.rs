//! Random test instances and edge subdivision.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, Instance, VertexId, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomGraphSpec {
    pub n: usize,
    pub k: usize,
    /// Edges added on top of the spanning tree; duplicates are skipped, so
    /// the final count may be lower.
    pub extra_edges: usize,
    /// Weights are drawn uniformly from `1..=max_weight`.
    pub max_weight: u32,
}

/// Random spanning tree (each vertex attaches to an earlier one in a
/// shuffled order) plus extra random edges, integer weights, and `k`
/// distinct terminals.
pub fn random_connected_instance(shape: &RandomGraphSpec, seed: u64) -> Result<Instance, GraphError> {
    if shape.k < 2 {
        return Err(GraphError::TooFewTerminals(shape.k));
    }
    if shape.k > shape.n {
        return Err(GraphError::VertexOutOfRange { vertex: shape.k - 1, vertex_count: shape.n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<VertexId> = (0..shape.n).collect();
    order.shuffle(&mut rng);
    let weight = |rng: &mut ChaCha8Rng| rng.gen_range(1..=shape.max_weight.max(1)) as f64;
    let mut seen = std::collections::BTreeSet::new();
    let mut edges = Vec::with_capacity(shape.n - 1 + shape.extra_edges);
    for i in 1..shape.n {
        let p = order[rng.gen_range(0..i)];
        let (u, v) = (order[i].min(p), order[i].max(p));
        seen.insert((u, v));
        edges.push((u, v, weight(&mut rng)));
    }
    if shape.n >= 2 {
        for _ in 0..shape.extra_edges {
            let a = rng.gen_range(0..shape.n);
            let b = rng.gen_range(0..shape.n);
            let (u, v) = (a.min(b), a.max(b));
            if u != v && seen.insert((u, v)) {
                edges.push((u, v, weight(&mut rng)));
            }
        }
    }
    let g = WeightedGraph::new(shape.n, edges)?;
    let mut terminals: Vec<VertexId> = (0..shape.n).collect();
    terminals.shuffle(&mut rng);
    terminals.truncate(shape.k);
    Instance::new(g, terminals)
}

/// Replaces every edge `(u, v, w)` by a path of `parts` edges of weight `w`
/// each. New vertices are numbered after the originals, edge by edge in
/// sorted edge order, starting from the `u` end, so canonical tie-breaks
/// among original vertices are unchanged.
pub fn subdivide(inst: &Instance, parts: usize) -> Instance {
    assert!(parts >= 1);
    let g = inst.graph();
    let mut next = g.vertex_count();
    let mut edges = Vec::with_capacity(g.edge_count() * parts);
    for e in g.edges() {
        let mut prev = e.u;
        for _ in 1..parts {
            edges.push((prev, next, e.weight));
            prev = next;
            next += 1;
        }
        edges.push((prev, e.v, e.weight));
    }
    let g = WeightedGraph::new(next, edges).expect("subdivision of a valid graph is valid");
    Instance::new(g, inst.terminals().to_vec()).expect("terminals unchanged")
}
