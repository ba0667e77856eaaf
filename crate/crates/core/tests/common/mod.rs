#![allow(dead_code)]

use std::collections::HashMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spr_core::generate::{random_connected_instance, RandomGraphSpec};
use spr_core::{Instance, TerminalPartition, VertexId, WeightedGraph};

pub fn arb_instance(max_n: usize, max_k: usize) -> impl Strategy<Value = Instance> {
    (3..=max_n, 2..=max_k, 0usize..2 * max_n, 1u32..=10, any::<u64>()).prop_map(|(n, k, extra, w, seed)| {
        let shape = RandomGraphSpec { n, k: k.min(n), extra_edges: extra, max_weight: w };
        random_connected_instance(&shape, seed).unwrap()
    })
}

/// All-pairs distances through petgraph, restricted to `allowed` when given.
pub fn petgraph_distances(g: &WeightedGraph, source: VertexId, allowed: Option<&[bool]>) -> HashMap<VertexId, f64> {
    let mut pg: UnGraph<(), f64> = UnGraph::new_undirected();
    let nodes: Vec<NodeIndex> = (0..g.vertex_count()).map(|_| pg.add_node(())).collect();
    let ok = |v: VertexId| allowed.is_none_or(|a| a[v]);
    for e in g.edges() {
        if ok(e.u) && ok(e.v) {
            pg.add_edge(nodes[e.u], nodes[e.v], e.weight);
        }
    }
    dijkstra(&pg, nodes[source], None, |e| *e.weight()).into_iter().map(|(n, d)| (n.index(), d)).collect()
}

/// Grows cells from the terminals by attaching random frontier vertices to
/// a random assigned neighbour, which keeps every cell connected.
pub fn random_valid_partition(inst: &Instance, seed: u64) -> TerminalPartition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inst.vertex_count();
    let mut cell: Vec<Option<usize>> = vec![None; n];
    for (j, &t) in inst.terminals().iter().enumerate() {
        cell[t] = Some(j);
    }
    loop {
        let frontier: Vec<(VertexId, usize)> = (0..n)
            .filter(|&v| cell[v].is_none())
            .flat_map(|v| inst.graph().neighbors(v).iter().map(move |&(u, _)| (v, u)))
            .filter_map(|(v, u)| cell[u].map(|c| (v, c)))
            .collect();
        if frontier.is_empty() {
            break;
        }
        let (v, c) = frontier[rng.gen_range(0..frontier.len())];
        cell[v] = Some(c);
    }
    TerminalPartition::new(cell.into_iter().map(|c| c.unwrap()).collect())
}
