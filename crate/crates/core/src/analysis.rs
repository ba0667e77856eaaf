//! Instrumentation of ball-growing runs.
//!
//! For every terminal pair the interior of the canonical path
//! `t_i = v_0, v_1, …, v_L = t_j` is swept greedily into cells. Replaying a
//! trace marks which terminals "reach" each cell, yielding terminal detours
//! whose concatenation is a walk from `t_i` to `t_j` that upper-bounds the
//! distance in the contracted minor. The same replay detects the three
//! bad-event families (far assignment, early assignment, too many reaching
//! terminals).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball_growing::{GrowthParams, RoundMeans, RunTrace};
use crate::graph::{Instance, ShortestPath, VertexId};
use crate::partition::TerminalMinor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("terminal pair ({0}, {1}) is not a pair of distinct terminal indices")]
    InvalidPair(usize, usize),
    #[error("trace does not match the instance: {0}")]
    TraceMismatch(String),
    #[error("pair ({i}, {j}) cell {cell} still has active vertices")]
    IncompleteCells { i: usize, j: usize, cell: usize },
    #[error("reaches on pair ({i}, {j}) cell {cell} do not tile the cell")]
    BrokenTiling { i: usize, j: usize, cell: usize },
}

/// A run of consecutive interior vertices `v_start ..= v_end` of one pair's
/// path. Indices refer to positions on the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCell {
    pub start: usize,
    pub end: usize,
    /// `v(Q) = v_start`.
    pub anchor: VertexId,
    /// `dist(v_start, v_end)`.
    pub internal_length: f64,
    /// `dist(v_{start-1}, v_{end+1})`.
    pub external_length: f64,
    /// `C₂ · D_anchor · δ / (5 log k)`; zero when the anchor is a terminal.
    pub threshold: f64,
    /// Last cell of the path, accepted without the external-length check.
    pub is_final: bool,
}

impl PathCell {
    pub fn external_meets_threshold(&self) -> bool {
        self.external_length >= self.threshold
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Canonical path of a terminal pair with its greedy cell partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPath {
    pub i: usize,
    pub j: usize,
    pub path: ShortestPath,
    /// `prefix[q] = dist(v_0, v_q)` along the path.
    pub prefix: Vec<f64>,
    pub cells: Vec<PathCell>,
}

impl PairPath {
    pub fn vertex(&self, q: usize) -> VertexId {
        self.path.vertices[q]
    }

    /// `½ · Σ_Q threshold(Q)`, which never exceeds `dist(t_i, t_j)` when
    /// every cell's external length reaches its threshold.
    pub fn half_threshold_sum(&self) -> f64 {
        0.5 * self.cells.iter().map(|c| c.threshold).sum::<f64>()
    }
}

/// Terminal `terminal` reached a cell, turning `v_{q_min} ..= v_{q_max}`
/// inactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reach {
    pub terminal: usize,
    pub q_min: usize,
    pub q_max: usize,
    pub round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReachLog {
    pub reaches: Vec<Reach>,
    pub fully_inactive: bool,
}

impl CellReachLog {
    pub fn distinct_terminals(&self) -> usize {
        let mut ts: Vec<usize> = self.reaches.iter().map(|r| r.terminal).collect();
        ts.sort_unstable();
        ts.dedup();
        ts.len()
    }
}

/// `SP(v_{q_min}, t) + SP(t, v_{q_max}) + (v_{q_max}, v_{q_max+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalDetour {
    pub q_min: usize,
    pub q_max: usize,
    pub terminal: usize,
}

/// Merges consecutive detours `(q₁, q₂, t)` and `(q₂+1, q₃, t)` into
/// `(q₁, q₃, t)` until neighbouring detours always differ in terminal.
pub fn merge_detours(detours: &[TerminalDetour]) -> Vec<TerminalDetour> {
    let mut out: Vec<TerminalDetour> = Vec::with_capacity(detours.len());
    for &d in detours {
        match out.last_mut() {
            Some(prev) if prev.terminal == d.terminal && prev.q_max + 1 == d.q_min => prev.q_max = d.q_max,
            _ => out.push(d),
        }
    }
    out
}

/// The reaches of a fully inactive cell that no later reach swallowed,
/// sorted by position. They tile the cell: a later reach starts and ends on
/// vertices that were still active, so it either contains an earlier range
/// or misses it entirely.
pub fn visible_detours(cell: &PathCell, log: &CellReachLog) -> Option<Vec<TerminalDetour>> {
    let mut visible: Vec<TerminalDetour> = log
        .reaches
        .iter()
        .enumerate()
        .filter(|(idx, r)| !log.reaches[idx + 1..].iter().any(|l| l.q_min <= r.q_min && r.q_max <= l.q_max))
        .map(|(_, r)| TerminalDetour { q_min: r.q_min, q_max: r.q_max, terminal: r.terminal })
        .collect();
    visible.sort_by_key(|d| d.q_min);
    let mut next = cell.start;
    for d in &visible {
        if d.q_min != next || d.q_max < d.q_min {
            return None;
        }
        next = d.q_max + 1;
    }
    (next == cell.end + 1).then_some(visible)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetourPath {
    /// Possibly non-simple walk from `t_i` to `t_j`.
    pub vertices: Vec<VertexId>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarEvent {
    pub vertex: VertexId,
    pub terminal: usize,
    pub distance: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyEvent {
    pub vertex: VertexId,
    pub round: usize,
    pub mean: f64,
    /// `C₂ · D_v · δ / log k`.
    pub threshold: f64,
    /// First round whose mean reaches `threshold`.
    pub threshold_round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManyEvent {
    pub i: usize,
    pub j: usize,
    pub cell: usize,
    pub distinct_terminals: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub i: usize,
    pub j: usize,
    pub cell: usize,
    pub log: CellReachLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadEventReport {
    pub far_events: Vec<FarEvent>,
    pub early_events: Vec<EarlyEvent>,
    pub many_events: Vec<ManyEvent>,
    pub cells: Vec<CellSummary>,
}

/// Per-pair outcome of [`Analyzer::analyze_run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetourCheck {
    pub i: usize,
    pub j: usize,
    pub detour_length: f64,
    pub minor_distance: f64,
    /// `detour_length >= minor_distance`.
    pub dominates: bool,
    /// No two consecutive merged detours share a terminal.
    pub alternating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub pairs: Vec<PairDetourCheck>,
    pub bad_events: BadEventReport,
}

/// Shared context for analysing runs on one instance.
#[derive(Debug)]
pub struct Analyzer<'a> {
    inst: &'a Instance,
    params: &'a GrowthParams,
    nearest: Vec<(usize, f64)>,
    log_k: f64,
}

impl<'a> Analyzer<'a> {
    pub fn new(inst: &'a Instance, params: &'a GrowthParams) -> Self {
        Analyzer { inst, params, nearest: inst.nearest_terminals(), log_k: params.log_k(inst.k()) }
    }

    /// `D_v`; zero for terminals.
    pub fn nearest_distance(&self, v: VertexId) -> f64 {
        self.nearest[v].1
    }

    /// `C₂ · D_v · δ / (5 log k)`.
    pub fn cell_threshold(&self, v: VertexId) -> f64 {
        self.params.c2 * self.nearest_distance(v) * self.params.delta / (5.0 * self.log_k)
    }

    /// Greedy sweep: a cell starts at the first uncovered interior vertex
    /// and extends while the distance from its anchor stays within the
    /// anchor's threshold. A terminal anchor has threshold zero and so
    /// forms a singleton cell.
    pub fn path_partition(&self, i: usize, j: usize) -> Result<PairPath, AnalysisError> {
        let k = self.inst.k();
        if i == j || i >= k || j >= k {
            return Err(AnalysisError::InvalidPair(i, j));
        }
        let path = self.inst.shortest_path(self.inst.terminal(i), self.inst.terminal(j));
        let g = self.inst.graph();
        let mut prefix = vec![0.0; path.vertices.len()];
        for q in 1..path.vertices.len() {
            let w = g.edge_weight(path.vertices[q - 1], path.vertices[q]).expect("path edges exist");
            prefix[q] = prefix[q - 1] + w;
        }
        let last = path.vertices.len() - 1;
        let mut cells = Vec::new();
        let mut a = 1;
        while a < last {
            let anchor = path.vertices[a];
            let threshold = self.cell_threshold(anchor);
            let mut b = a;
            while b + 1 < last && prefix[b + 1] - prefix[a] <= threshold {
                b += 1;
            }
            cells.push(PathCell {
                start: a,
                end: b,
                anchor,
                internal_length: prefix[b] - prefix[a],
                external_length: prefix[b + 1] - prefix[a - 1],
                threshold,
                is_final: b + 1 == last,
            });
            a = b + 1;
        }
        Ok(PairPath { i, j, path, prefix, cells })
    }

    /// Replays `trace` step by step. A step is one terminal's ball
    /// expansion in one round (or a terminal's initial self-assignment).
    /// Each step that absorbs an active vertex of a cell is a reach; it
    /// deactivates the whole index range between the first and last such
    /// vertex.
    pub fn track_reaches(&self, trace: &RunTrace, pair: &PairPath) -> Result<Vec<CellReachLog>, AnalysisError> {
        trace.check_against(self.inst).map_err(|e| AnalysisError::TraceMismatch(e.to_string()))?;
        let n = self.inst.vertex_count();
        let mut position = vec![None; n];
        let mut cell_at = vec![usize::MAX; pair.path.vertices.len()];
        for (c, cell) in pair.cells.iter().enumerate() {
            for q in cell.start..=cell.end {
                position[pair.vertex(q)] = Some(q);
                cell_at[q] = c;
            }
        }
        let mut active = vec![true; pair.path.vertices.len()];
        let mut logs: Vec<CellReachLog> =
            pair.cells.iter().map(|_| CellReachLog { reaches: Vec::new(), fully_inactive: false }).collect();

        let events = &trace.events;
        let mut s = 0;
        while s < events.len() {
            let key = (events[s].round, events[s].terminal);
            let mut e = s;
            while e < events.len() && (events[e].round, events[e].terminal) == key {
                e += 1;
            }
            // (cell, q) pairs hit by this step, in cell order
            let mut hits: Vec<(usize, usize)> = events[s..e]
                .iter()
                .filter_map(|ev| position[ev.vertex])
                .filter(|&q| active[q])
                .map(|q| (cell_at[q], q))
                .collect();
            hits.sort_unstable();
            let mut h = 0;
            while h < hits.len() {
                let c = hits[h].0;
                let q_min = hits[h].1;
                let mut q_max = q_min;
                while h < hits.len() && hits[h].0 == c {
                    q_max = hits[h].1;
                    h += 1;
                }
                active[q_min..=q_max].iter_mut().for_each(|a| *a = false);
                logs[c].reaches.push(Reach { terminal: key.1, q_min, q_max, round: key.0 });
            }
            s = e;
        }
        for (c, cell) in pair.cells.iter().enumerate() {
            logs[c].fully_inactive = !active[cell.start..=cell.end].iter().any(|&a| a);
        }
        Ok(logs)
    }

    /// Concatenates `(t_i, v_1)` with each cell's detours into a walk from
    /// `t_i` to `t_j`.
    pub fn build_detour_path(
        &self,
        pair: &PairPath,
        merged: &[Vec<TerminalDetour>],
    ) -> Result<DetourPath, AnalysisError> {
        let g = self.inst.graph();
        let verts = &pair.path.vertices;
        let last = verts.len() - 1;
        let edge = |q: usize| g.edge_weight(verts[q], verts[q + 1]).expect("path edge");
        let mut out = vec![verts[0], verts[1]];
        let mut length = edge(0);
        if last == 1 {
            return Ok(DetourPath { vertices: out, length });
        }
        for (c, cell) in pair.cells.iter().enumerate() {
            let detours = merged.get(c).filter(|d| !d.is_empty()).ok_or(AnalysisError::IncompleteCells {
                i: pair.i,
                j: pair.j,
                cell: c,
            })?;
            let mut next = cell.start;
            for d in detours {
                if d.q_min != next {
                    return Err(AnalysisError::BrokenTiling { i: pair.i, j: pair.j, cell: c });
                }
                let t = self.inst.terminal(d.terminal);
                let there = self.inst.shortest_path(verts[d.q_min], t);
                let back = self.inst.shortest_path(t, verts[d.q_max]);
                out.extend_from_slice(&there.vertices[1..]);
                out.extend_from_slice(&back.vertices[1..]);
                out.push(verts[d.q_max + 1]);
                length += there.length + back.length + edge(d.q_max);
                next = d.q_max + 1;
            }
            if next != cell.end + 1 {
                return Err(AnalysisError::BrokenTiling { i: pair.i, j: pair.j, cell: c });
            }
        }
        Ok(DetourPath { vertices: out, length })
    }

    fn all_pairs(&self, trace: &RunTrace) -> Result<Vec<(PairPath, Vec<CellReachLog>)>, AnalysisError> {
        let k = self.inst.k();
        let mut out = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                let pair = self.path_partition(i, j)?;
                let logs = self.track_reaches(trace, &pair)?;
                out.push((pair, logs));
            }
        }
        Ok(out)
    }

    fn bad_events_from(&self, trace: &RunTrace, pairs: &[(PairPath, Vec<CellReachLog>)]) -> BadEventReport {
        let p = self.params;
        let mut far_events = Vec::new();
        let mut early_events = Vec::new();
        let means: Vec<f64> = match trace.base_mean {
            Some(d) => RoundMeans::new(d, trace.growth_rate).take(trace.total_rounds()).collect(),
            None => Vec::new(),
        };
        for ev in &trace.events {
            let Some(round) = ev.round else { continue };
            let v = ev.vertex;
            let dv = self.nearest_distance(v);
            let distance = self.inst.distance(v, self.inst.terminal(ev.terminal));
            let far_threshold = p.c1 * dv;
            if distance >= far_threshold {
                far_events.push(FarEvent { vertex: v, terminal: ev.terminal, distance, threshold: far_threshold });
            }
            let z = p.c2 * dv * p.delta / self.log_k;
            let threshold_round = match means.iter().position(|&m| m >= z) {
                Some(r) => r,
                None => {
                    let d = trace.base_mean.expect("assigned events imply a base mean");
                    RoundMeans::new(d, trace.growth_rate).position(|m| m >= z).expect("means grow without bound")
                }
            };
            if round <= threshold_round {
                early_events.push(EarlyEvent { vertex: v, round, mean: means[round], threshold: z, threshold_round });
            }
        }
        let many_threshold = p.c3 * self.log_k;
        let mut many_events = Vec::new();
        let mut cells = Vec::new();
        for (pair, logs) in pairs {
            for (c, log) in logs.iter().enumerate() {
                let distinct = log.distinct_terminals();
                if distinct as f64 >= many_threshold {
                    many_events.push(ManyEvent {
                        i: pair.i,
                        j: pair.j,
                        cell: c,
                        distinct_terminals: distinct,
                        threshold: many_threshold,
                    });
                }
                cells.push(CellSummary { i: pair.i, j: pair.j, cell: c, log: log.clone() });
            }
        }
        BadEventReport { far_events, early_events, many_events, cells }
    }

    pub fn detect_bad_events(&self, trace: &RunTrace) -> Result<BadEventReport, AnalysisError> {
        let pairs = self.all_pairs(trace)?;
        Ok(self.bad_events_from(trace, &pairs))
    }

    /// Bad events plus, for every pair, the detour walk checked against
    /// the minor distance.
    pub fn analyze_run(&self, trace: &RunTrace, minor: &TerminalMinor) -> Result<RunAnalysis, AnalysisError> {
        let pairs = self.all_pairs(trace)?;
        let md = minor.distances();
        let mut checks = Vec::with_capacity(pairs.len());
        for (pair, logs) in &pairs {
            let mut merged = Vec::with_capacity(logs.len());
            let mut alternating = true;
            for (c, (cell, log)) in pair.cells.iter().zip(logs).enumerate() {
                if !log.fully_inactive {
                    return Err(AnalysisError::IncompleteCells { i: pair.i, j: pair.j, cell: c });
                }
                let visible = visible_detours(cell, log).ok_or(AnalysisError::BrokenTiling {
                    i: pair.i,
                    j: pair.j,
                    cell: c,
                })?;
                let m = merge_detours(&visible);
                alternating &= m.windows(2).all(|w| w[0].terminal != w[1].terminal);
                merged.push(m);
            }
            let detour = self.build_detour_path(pair, &merged)?;
            let minor_distance = md[pair.i][pair.j];
            checks.push(PairDetourCheck {
                i: pair.i,
                j: pair.j,
                detour_length: detour.length,
                minor_distance,
                dominates: detour.length >= minor_distance,
                alternating,
            });
        }
        Ok(RunAnalysis { pairs: checks, bad_events: self.bad_events_from(trace, &pairs) })
    }
}

/// `40 · C₃ · (C₁ + 1) / C₂`.
pub fn distortion_bound_coefficient(params: &GrowthParams) -> f64 {
    40.0 * params.c3 * (params.c1 + 1.0) / params.c2
}

/// `1 + 40 · C₃ · (C₁ + 1) / C₂ · log² k`, the distortion guaranteed when no
/// bad event occurs.
pub fn distortion_bound(params: &GrowthParams, k: usize) -> f64 {
    let l = params.log_k(k);
    1.0 + distortion_bound_coefficient(params) * l * l
}
