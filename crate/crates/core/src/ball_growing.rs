//! Randomized ball growing.
//!
//! Every terminal `t_j` owns a radius `R_j` and a cell `V_j = {t_j}`. Round
//! `ℓ` has mean `μ_ℓ = D·r^ℓ`. Within a round the terminals are visited in
//! index order; each draws an increment with mean `μ_ℓ`, grows its radius
//! and absorbs every unassigned vertex within `R_j` of `t_j` in the
//! subgraph induced by its own cell plus the unassigned vertices. Rounds
//! repeat until every vertex has a cell.
//!
//! Randomness comes from ChaCha8 with one stream per `(round, terminal)`,
//! so a draw depends only on the seed and its position. A run stops as soon
//! as the last vertex is absorbed, which only skips draws nobody would use.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{restricted_dijkstra, Instance, VertexId};
use crate::partition::TerminalPartition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BallGrowingError {
    #[error("instance has no non-terminals")]
    NoNonTerminals,
    #[error("round cap {cap} reached with {unassigned} vertices still unassigned")]
    RoundCapExceeded { cap: usize, unassigned: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("trace does not match the instance: {0}")]
    TraceMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Binary,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Binary => x.log2(),
        }
    }
}

/// Radius increment law. Only `Exponential` is covered by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementDistribution {
    #[default]
    Exponential,
    /// Uniform on `(0, 2μ]`. Experimental.
    BoundedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub delta: f64,
    pub log_base: LogBase,
    /// Far-assignment factor.
    pub c1: f64,
    /// Early-assignment factor.
    pub c2: f64,
    /// Many-reaches factor.
    pub c3: f64,
    /// `None` derives a cap from the instance, see [`default_round_cap`].
    pub max_rounds: Option<usize>,
    pub seed: u64,
    pub increment: IncrementDistribution,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams {
            delta: 0.5,
            log_base: LogBase::Natural,
            c1: 5400.0,
            c2: 1.0 / 27.0,
            c3: 30.0,
            max_rounds: None,
            seed: 0,
            increment: IncrementDistribution::Exponential,
        }
    }
}

impl GrowthParams {
    pub fn with_seed(seed: u64) -> Self {
        GrowthParams { seed, ..Self::default() }
    }

    pub fn log_k(&self, k: usize) -> f64 {
        self.log_base.log(k as f64)
    }

    /// `r = 1 + δ / log k`.
    pub fn growth_rate(&self, k: usize) -> f64 {
        1.0 + self.delta / self.log_k(k)
    }

    /// The tail lemmas assume `δ ≤ 1/2` and exponential increments.
    pub fn in_analyzed_regime(&self) -> bool {
        self.delta <= 0.5 && self.increment == IncrementDistribution::Exponential
    }

    pub fn validate(&self, k: usize) -> Result<(), BallGrowingError> {
        let bad = |m: &str| Err(BallGrowingError::InvalidParams(m.to_string()));
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad("delta must be positive and finite");
        }
        if k < 2 {
            return bad("need at least two terminals");
        }
        if !(self.growth_rate(k) > 1.0 && self.growth_rate(k).is_finite()) {
            return bad("growth rate must exceed 1");
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(c.is_finite() && c > 0.0) {
                return Err(BallGrowingError::InvalidParams(format!("{name} must be positive")));
            }
        }
        if self.max_rounds == Some(0) {
            return bad("max_rounds must be positive");
        }
        Ok(())
    }
}

/// `μ_0 = D, μ_{ℓ+1} = μ_ℓ · r`, by repeated multiplication. Every module
/// that needs round means goes through this so they agree bit for bit.
#[derive(Debug, Clone)]
pub struct RoundMeans {
    next: f64,
    rate: f64,
}

impl RoundMeans {
    pub fn new(base_mean: f64, rate: f64) -> Self {
        RoundMeans { next: base_mean, rate }
    }
}

impl Iterator for RoundMeans {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let cur = self.next;
        self.next *= self.rate;
        Some(cur)
    }
}

/// `D = δ / (100 · log k) · min_{v ∉ T} D_v`.
pub fn compute_base_mean(inst: &Instance, params: &GrowthParams) -> Result<f64, BallGrowingError> {
    let nearest = inst.nearest_terminals();
    let min_dv = inst
        .non_terminals()
        .map(|v| nearest[v].1)
        .min_by(f64::total_cmp)
        .ok_or(BallGrowingError::NoNonTerminals)?;
    Ok(params.delta / (100.0 * params.log_k(inst.k())) * min_dv)
}

/// `10 · ⌈log_r(n · W / D)⌉` where `W = 2 · ecc(t_0)` bounds the largest
/// pairwise distance from above.
pub fn default_round_cap(inst: &Instance, params: &GrowthParams, base_mean: f64) -> usize {
    let ecc = inst.tree(inst.terminal(0)).distances().iter().copied().fold(0.0, f64::max);
    let span = inst.vertex_count() as f64 * 2.0 * ecc / base_mean;
    let rounds = (span.ln() / params.growth_rate(inst.k()).ln()).ceil().max(1.0);
    10 * rounds as usize
}

/// `mean · (−ln u)` for `u ∈ (0, 1]`.
pub fn erv_from_uniform(mean: f64, u: f64) -> f64 {
    -mean * u.ln()
}

/// One `Exp(mean)` draw.
pub fn sample_erv<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    // gen::<f64>() is in [0, 1); flip it to (0, 1]
    erv_from_uniform(mean, 1.0 - rng.gen::<f64>())
}

/// Supplies radius increments to [`run_with_source`].
pub trait IncrementSource {
    fn draw(&mut self, round: usize, terminal: usize, mean: f64) -> Result<f64, BallGrowingError>;
}

/// Fresh draws from a seed, one ChaCha8 stream per `(round, terminal)`.
#[derive(Debug, Clone)]
pub struct SeededIncrements {
    seed: u64,
    distribution: IncrementDistribution,
}

impl SeededIncrements {
    pub fn new(seed: u64, distribution: IncrementDistribution) -> Self {
        SeededIncrements { seed, distribution }
    }

    pub fn stream(&self, round: usize, terminal: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((round as u64) << 32) | terminal as u64);
        rng
    }
}

impl IncrementSource for SeededIncrements {
    fn draw(&mut self, round: usize, terminal: usize, mean: f64) -> Result<f64, BallGrowingError> {
        let mut rng = self.stream(round, terminal);
        Ok(match self.distribution {
            IncrementDistribution::Exponential => sample_erv(&mut rng, mean),
            IncrementDistribution::BoundedUniform => 2.0 * mean * (1.0 - rng.gen::<f64>()),
        })
    }
}

/// Replays the draws stored in a trace.
#[derive(Debug, Clone)]
pub struct ReplayIncrements<'a> {
    trace: &'a RunTrace,
}

impl<'a> ReplayIncrements<'a> {
    pub fn new(trace: &'a RunTrace) -> Self {
        ReplayIncrements { trace }
    }
}

impl IncrementSource for ReplayIncrements<'_> {
    fn draw(&mut self, round: usize, terminal: usize, _mean: f64) -> Result<f64, BallGrowingError> {
        self.trace
            .rounds
            .get(round)
            .and_then(|r| r.draws.get(terminal))
            .copied()
            .ok_or_else(|| BallGrowingError::TraceMismatch(format!("no draw for round {round}, terminal {terminal}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: usize,
    pub mean: f64,
    /// Increments in terminal order; shorter than `k` only for the final
    /// round when the last vertex was absorbed early.
    pub draws: Vec<f64>,
    /// Radii after the round.
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEvent {
    pub vertex: VertexId,
    pub terminal: usize,
    /// `None` for the terminals' own initial assignment.
    pub round: Option<usize>,
    pub mean: Option<f64>,
    /// `R_terminal` at the moment of assignment.
    pub radius: f64,
}

/// Full record of one run. Events are in the order they happened: the
/// terminals first, then by (round, terminal index, distance from the
/// terminal), which is the replay order used by the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub params: GrowthParams,
    pub vertex_count: usize,
    pub terminals: Vec<VertexId>,
    /// `None` when there are no non-terminals.
    pub base_mean: Option<f64>,
    pub growth_rate: f64,
    pub round_cap: usize,
    pub rounds: Vec<RoundRecord>,
    pub events: Vec<AssignmentEvent>,
}

impl RunTrace {
    pub fn total_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Event index for every vertex.
    pub fn event_index(&self) -> Vec<usize> {
        let mut idx = vec![usize::MAX; self.vertex_count];
        for (i, e) in self.events.iter().enumerate() {
            idx[e.vertex] = i;
        }
        idx
    }

    pub fn partition(&self) -> TerminalPartition {
        let mut a = vec![0; self.vertex_count];
        for e in &self.events {
            a[e.vertex] = e.terminal;
        }
        TerminalPartition::new(a)
    }

    /// Checks that this trace could have come from `inst`.
    pub fn check_against(&self, inst: &Instance) -> Result<(), BallGrowingError> {
        let mismatch = |m: String| Err(BallGrowingError::TraceMismatch(m));
        if self.vertex_count != inst.vertex_count() {
            return mismatch(format!("{} vertices, instance has {}", self.vertex_count, inst.vertex_count()));
        }
        if self.terminals != inst.terminals() {
            return mismatch("terminal list differs".into());
        }
        let mut seen = vec![false; self.vertex_count];
        for e in &self.events {
            if e.vertex >= self.vertex_count || e.terminal >= inst.k() {
                return mismatch(format!("event out of range: {e:?}"));
            }
            if std::mem::replace(&mut seen[e.vertex], true) {
                return mismatch(format!("vertex {} assigned twice", e.vertex));
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return mismatch(format!("vertex {v} never assigned"));
        }
        Ok(())
    }
}

/// Runs ball growing with increments from `params.seed`.
pub fn run(inst: &Instance, params: &GrowthParams) -> Result<(TerminalPartition, RunTrace), BallGrowingError> {
    let mut source = SeededIncrements::new(params.seed, params.increment);
    run_with_source(inst, params, &mut source)
}

/// Re-executes a trace's draws on `inst`.
pub fn replay(inst: &Instance, trace: &RunTrace) -> Result<(TerminalPartition, RunTrace), BallGrowingError> {
    let mut params = trace.params.clone();
    // a trace without rounds carries cap 0
    params.max_rounds = (trace.round_cap > 0).then_some(trace.round_cap);
    let mut source = ReplayIncrements::new(trace);
    run_with_source(inst, &params, &mut source)
}

pub fn run_with_source(
    inst: &Instance,
    params: &GrowthParams,
    source: &mut dyn IncrementSource,
) -> Result<(TerminalPartition, RunTrace), BallGrowingError> {
    let k = inst.k();
    let n = inst.vertex_count();
    params.validate(k)?;
    let rate = params.growth_rate(k);

    let mut cell: Vec<Option<usize>> = vec![None; n];
    let mut events = Vec::with_capacity(n);
    for (j, &t) in inst.terminals().iter().enumerate() {
        cell[t] = Some(j);
        events.push(AssignmentEvent { vertex: t, terminal: j, round: None, mean: None, radius: 0.0 });
    }
    let mut unassigned = n - k;

    let mut trace = RunTrace {
        params: params.clone(),
        vertex_count: n,
        terminals: inst.terminals().to_vec(),
        base_mean: None,
        growth_rate: rate,
        round_cap: params.max_rounds.unwrap_or(0),
        rounds: Vec::new(),
        events,
    };
    if unassigned == 0 {
        return Ok((trace.partition(), trace));
    }

    let base_mean = compute_base_mean(inst, params)?;
    let cap = params.max_rounds.unwrap_or_else(|| default_round_cap(inst, params, base_mean));
    trace.base_mean = Some(base_mean);
    trace.round_cap = cap;

    let mut radii = vec![0.0f64; k];
    for (round, mean) in RoundMeans::new(base_mean, rate).enumerate() {
        if round >= cap {
            return Err(BallGrowingError::RoundCapExceeded { cap, unassigned });
        }
        let mut draws = Vec::with_capacity(k);
        for j in 0..k {
            let q = source.draw(round, j, mean)?;
            if !(q.is_finite() && q >= 0.0) {
                return Err(BallGrowingError::InvalidParams(format!("increment {q} is not a finite non-negative value")));
            }
            draws.push(q);
            radii[j] += q;
            let ball = restricted_dijkstra(inst.graph(), |v| cell[v].is_none_or(|c| c == j), inst.terminal(j), radii[j]);
            for (v, _) in ball {
                if cell[v].is_none() {
                    cell[v] = Some(j);
                    unassigned -= 1;
                    trace.events.push(AssignmentEvent {
                        vertex: v,
                        terminal: j,
                        round: Some(round),
                        mean: Some(mean),
                        radius: radii[j],
                    });
                }
            }
            if unassigned == 0 {
                break;
            }
        }
        trace.rounds.push(RoundRecord { index: round, mean, draws, radii: radii.clone() });
        if unassigned == 0 {
            break;
        }
    }
    Ok((trace.partition(), trace))
}
