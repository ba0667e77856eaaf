//! Terminal-centered partitions, their contracted minors, distortion, and
//! the exhaustive optimum for tiny instances.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Instance, VertexId};

/// Largest number of non-terminals [`oracle_optimal`] will enumerate.
pub const ORACLE_MAX_NON_TERMINALS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("invalid partition: {}", join_violations(.0))]
    InvalidPartition(Vec<Violation>),
    #[error("{non_terminals} non-terminals exceed the oracle limit of {limit}")]
    TooLarge { non_terminals: usize, limit: usize },
    #[error("minor has {found} terminals, instance has {expected}")]
    TerminalCountMismatch { expected: usize, found: usize },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Why a partition is not terminal-centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    WrongLength { expected: usize, found: usize },
    CellOutOfRange { vertex: VertexId, cell: usize },
    /// Terminal `t_terminal` sits in some other cell.
    TerminalInForeignCell { terminal: usize, cell: usize },
    DisconnectedCell { cell: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongLength { expected, found } => {
                write!(f, "assignment has {found} entries, graph has {expected} vertices")
            }
            Violation::CellOutOfRange { vertex, cell } => write!(f, "vertex {vertex} assigned to nonexistent cell {cell}"),
            Violation::TerminalInForeignCell { terminal, cell } => {
                write!(f, "terminal {terminal} assigned to cell {cell}")
            }
            Violation::DisconnectedCell { cell } => write!(f, "cell {cell} does not induce a connected subgraph"),
        }
    }
}

/// Cell index (= terminal index) of every vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalPartition {
    pub assignment: Vec<usize>,
}

impl TerminalPartition {
    pub fn new(assignment: Vec<usize>) -> Self {
        TerminalPartition { assignment }
    }

    /// Every vertex in its own terminal's cell; only valid when `V = T`.
    pub fn trivial(inst: &Instance) -> Self {
        let assignment = (0..inst.vertex_count()).map(|v| inst.terminal_index(v).unwrap_or(0)).collect();
        TerminalPartition { assignment }
    }

    pub fn cell_of(&self, v: VertexId) -> usize {
        self.assignment[v]
    }

    pub fn cell(&self, j: usize) -> Vec<VertexId> {
        (0..self.assignment.len()).filter(|&v| self.assignment[v] == j).collect()
    }
}

/// Empty when the partition is terminal-centered.
pub fn validate(inst: &Instance, p: &TerminalPartition) -> Vec<Violation> {
    let n = inst.vertex_count();
    let k = inst.k();
    if p.assignment.len() != n {
        return vec![Violation::WrongLength { expected: n, found: p.assignment.len() }];
    }
    let mut out = Vec::new();
    for (v, &c) in p.assignment.iter().enumerate() {
        if c >= k {
            out.push(Violation::CellOutOfRange { vertex: v, cell: c });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for j in 0..k {
        let c = p.assignment[inst.terminal(j)];
        if c != j {
            out.push(Violation::TerminalInForeignCell { terminal: j, cell: c });
        }
    }
    // Each cell must be reachable from its terminal inside the cell. A cell
    // whose terminal is elsewhere counts as disconnected unless it is empty.
    let g = inst.graph();
    let mut seen = vec![false; n];
    for j in 0..k {
        let t = inst.terminal(j);
        if p.assignment[t] == j && !seen[t] {
            seen[t] = true;
            let mut stack = vec![t];
            while let Some(u) = stack.pop() {
                for &(v, _) in g.neighbors(u) {
                    if !seen[v] && p.assignment[v] == j {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
    }
    let mut disconnected = vec![false; k];
    for v in 0..n {
        if !seen[v] {
            disconnected[p.assignment[v]] = true;
        }
    }
    out.extend(disconnected.iter().enumerate().filter(|(_, &d)| d).map(|(cell, _)| Violation::DisconnectedCell { cell }));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinorEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Contracted graph on the terminals; edge `(i, j)` with `i < j` carries
/// `dist_G(t_i, t_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalMinor {
    pub terminals: Vec<VertexId>,
    pub edges: Vec<MinorEdge>,
}

impl TerminalMinor {
    pub fn k(&self) -> usize {
        self.terminals.len()
    }

    /// All-pairs distances in the minor (Floyd–Warshall; `k` is small).
    pub fn distances(&self) -> Vec<Vec<f64>> {
        let k = self.k();
        let mut d = vec![vec![f64::INFINITY; k]; k];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for e in &self.edges {
            d[e.i][e.j] = d[e.i][e.j].min(e.weight);
            d[e.j][e.i] = d[e.j][e.i].min(e.weight);
        }
        for m in 0..k {
            for a in 0..k {
                for b in 0..k {
                    let via = d[a][m] + d[m][b];
                    if via < d[a][b] {
                        d[a][b] = via;
                    }
                }
            }
        }
        d
    }
}

fn contract_unchecked(inst: &Instance, p: &TerminalPartition) -> TerminalMinor {
    let k = inst.k();
    let mut adjacent = vec![vec![false; k]; k];
    for e in inst.graph().edges() {
        let (a, b) = (p.assignment[e.u], p.assignment[e.v]);
        if a != b {
            adjacent[a.min(b)][a.max(b)] = true;
        }
    }
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if adjacent[i][j] {
                edges.push(MinorEdge { i, j, weight: inst.terminal_distance(i, j) });
            }
        }
    }
    TerminalMinor { terminals: inst.terminals().to_vec(), edges }
}

/// Contracts each cell onto its terminal.
pub fn contract(inst: &Instance, p: &TerminalPartition) -> Result<TerminalMinor, PartitionError> {
    let violations = validate(inst, p);
    if !violations.is_empty() {
        return Err(PartitionError::InvalidPartition(violations));
    }
    Ok(contract_unchecked(inst, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistortion {
    pub i: usize,
    pub j: usize,
    pub original: f64,
    pub minor: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub max_ratio: f64,
    pub pairs: Vec<PairDistortion>,
}

/// `max_{i<j} dist_{G'}(t_i,t_j) / dist_G(t_i,t_j)` with the per-pair table.
pub fn distortion(inst: &Instance, minor: &TerminalMinor) -> Result<DistortionReport, PartitionError> {
    if minor.k() != inst.k() {
        return Err(PartitionError::TerminalCountMismatch { expected: inst.k(), found: minor.k() });
    }
    let md = minor.distances();
    let mut pairs = Vec::new();
    for i in 0..inst.k() {
        for j in i + 1..inst.k() {
            let original = inst.terminal_distance(i, j);
            let ratio = md[i][j] / original;
            pairs.push(PairDistortion { i, j, original, minor: md[i][j], ratio });
        }
    }
    let max_ratio = pairs.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(DistortionReport { max_ratio, pairs })
}

fn max_distortion(inst: &Instance, p: &TerminalPartition) -> f64 {
    let minor = contract_unchecked(inst, p);
    let md = minor.distances();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..inst.k() {
        for j in i + 1..inst.k() {
            worst = worst.max(md[i][j] / inst.terminal_distance(i, j));
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub distortion: f64,
    pub partition: TerminalPartition,
}

/// Partial assignment can still be completed to a valid partition: every
/// decided non-terminal must reach its terminal through vertices that are
/// undecided or in the same cell.
fn completable(inst: &Instance, assignment: &[Option<usize>]) -> bool {
    let g = inst.graph();
    let n = inst.vertex_count();
    for j in 0..inst.k() {
        let mut seen = vec![false; n];
        let t = inst.terminal(j);
        seen[t] = true;
        let mut stack = vec![t];
        while let Some(u) = stack.pop() {
            for &(v, _) in g.neighbors(u) {
                if !seen[v] && assignment[v].is_none_or(|c| c == j) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if (0..n).any(|v| assignment[v] == Some(j) && !seen[v]) {
            return false;
        }
    }
    true
}

fn search(
    inst: &Instance,
    order: &[VertexId],
    depth: usize,
    assignment: &mut Vec<Option<usize>>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if depth == order.len() {
        let full: Vec<usize> = assignment.iter().map(|c| c.expect("all decided")).collect();
        let d = max_distortion(inst, &TerminalPartition::new(full.clone()));
        // strict improvement keeps the lexicographically first minimizer
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            *best = Some((d, full));
        }
        return;
    }
    let v = order[depth];
    for c in 0..inst.k() {
        assignment[v] = Some(c);
        if completable(inst, assignment) {
            search(inst, order, depth + 1, assignment, best);
        }
    }
    assignment[v] = None;
}

/// Exhaustive minimum-distortion terminal-centered partition.
///
/// Non-terminals are decided in increasing id order, cells in increasing
/// index order, and branches that can no longer yield connected cells are
/// cut. The minimizer returned is the lexicographically smallest assignment
/// among those attaining the minimum.
pub fn oracle_optimal(inst: &Instance) -> Result<OracleResult, PartitionError> {
    let order: Vec<VertexId> = inst.non_terminals().collect();
    if order.len() > ORACLE_MAX_NON_TERMINALS {
        return Err(PartitionError::TooLarge { non_terminals: order.len(), limit: ORACLE_MAX_NON_TERMINALS });
    }
    let mut base: Vec<Option<usize>> = (0..inst.vertex_count()).map(|v| inst.terminal_index(v)).collect();
    if order.is_empty() {
        let full: Vec<usize> = base.iter().map(|c| c.unwrap()).collect();
        let partition = TerminalPartition::new(full);
        return Ok(OracleResult { distortion: max_distortion(inst, &partition), partition });
    }

    // Fan out over the first decision; per-branch minima are reduced in
    // branch order so the result does not depend on scheduling.
    let first = order[0];
    let branches: Vec<Option<(f64, Vec<usize>)>> = (0..inst.k())
        .into_par_iter()
        .map(|c| {
            let mut a = base.clone();
            a[first] = Some(c);
            let mut best = None;
            if completable(inst, &a) {
                search(inst, &order, 1, &mut a, &mut best);
            }
            best
        })
        .collect();
    base[first] = None;
    let (distortion, assignment) = branches
        .into_iter()
        .flatten()
        .reduce(|acc, x| if x.0 < acc.0 { x } else { acc })
        .expect("a connected graph always admits a terminal-centered partition");
    Ok(OracleResult { distortion, partition: TerminalPartition::new(assignment) })
}
