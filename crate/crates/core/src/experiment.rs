//! Repeated preprocess → ball growing → contraction trials with bad-event
//! and detour instrumentation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{AnalysisError, Analyzer};
use crate::ball_growing::{run, BallGrowingError, GrowthParams};
use crate::generate::{random_connected_instance, RandomGraphSpec};
use crate::graph::{GraphError, Instance};
use crate::partition::{contract, distortion, validate, PartitionError};
use crate::preprocess::exact_minor;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trial {trial}: {source}")]
    Graph { trial: usize, source: GraphError },
    #[error("trial {trial}: {source}")]
    BallGrowing { trial: usize, source: BallGrowingError },
    #[error("trial {trial}: {source}")]
    Partition { trial: usize, source: PartitionError },
    #[error("trial {trial}: {source}")]
    Analysis { trial: usize, source: AnalysisError },
}

/// Where each trial's instance comes from.
#[derive(Debug, Clone)]
pub enum InstanceSource {
    /// Every trial reuses this instance with a fresh seed.
    Fixed(Instance),
    /// Every trial draws a new graph from its own seed.
    Random(RandomGraphSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub vertices: usize,
    pub minor_vertices: usize,
    pub k: usize,
    pub rounds: usize,
    pub distortion: f64,
    pub far_events: usize,
    pub early_events: usize,
    pub many_events: usize,
    pub detour_pairs: usize,
    pub detour_violations: usize,
    pub alternation_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    pub median_distortion: f64,
    pub max_distortion: f64,
    /// Fraction of trials with at least one event of each kind.
    pub far_frequency: f64,
    pub early_frequency: f64,
    pub many_frequency: f64,
    pub detour_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub seed: u64,
    pub params: GrowthParams,
    pub trials: Vec<TrialResult>,
    pub summary: ExperimentSummary,
}

/// `splitmix64` of `seed + trial`, so trial seeds are spread out.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_trial(inst: &Instance, params: &GrowthParams, trial: usize) -> Result<TrialResult, ExperimentError> {
    let pre = exact_minor(inst);
    let minor_inst = &pre.minor;
    let (p, trace) = run(minor_inst, params).map_err(|source| ExperimentError::BallGrowing { trial, source })?;
    let violations = validate(minor_inst, &p);
    if !violations.is_empty() {
        return Err(ExperimentError::Partition { trial, source: PartitionError::InvalidPartition(violations) });
    }
    let minor = contract(minor_inst, &p).map_err(|source| ExperimentError::Partition { trial, source })?;
    let report = distortion(minor_inst, &minor).map_err(|source| ExperimentError::Partition { trial, source })?;
    let analysis = Analyzer::new(minor_inst, params)
        .analyze_run(&trace, &minor)
        .map_err(|source| ExperimentError::Analysis { trial, source })?;
    Ok(TrialResult {
        trial,
        seed: params.seed,
        vertices: inst.vertex_count(),
        minor_vertices: minor_inst.vertex_count(),
        k: inst.k(),
        rounds: trace.total_rounds(),
        distortion: report.max_ratio,
        far_events: analysis.bad_events.far_events.len(),
        early_events: analysis.bad_events.early_events.len(),
        many_events: analysis.bad_events.many_events.len(),
        detour_pairs: analysis.pairs.len(),
        detour_violations: analysis.pairs.iter().filter(|c| !c.dominates).count(),
        alternation_violations: analysis.pairs.iter().filter(|c| !c.alternating).count(),
    })
}

/// Runs `trials` independent trials in parallel; results are ordered by
/// trial index.
pub fn run_experiment(
    source: &InstanceSource,
    params: &GrowthParams,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport, ExperimentError> {
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            let p = GrowthParams { seed: s, ..params.clone() };
            match source {
                InstanceSource::Fixed(inst) => run_trial(inst, &p, t),
                InstanceSource::Random(shape) => {
                    let inst = random_connected_instance(shape, s).map_err(|source| ExperimentError::Graph { trial: t, source })?;
                    run_trial(&inst, &p, t)
                }
            }
        })
        .collect::<Result<_, _>>()?;
    let summary = summarize(&results);
    Ok(ExperimentReport { schema_version: 1, seed, params: params.clone(), trials: results, summary })
}

fn summarize(results: &[TrialResult]) -> ExperimentSummary {
    let mut d: Vec<f64> = results.iter().map(|r| r.distortion).collect();
    d.sort_by(f64::total_cmp);
    let median = match d.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => d[n / 2],
        n => 0.5 * (d[n / 2 - 1] + d[n / 2]),
    };
    let freq = |f: fn(&TrialResult) -> usize| {
        results.iter().filter(|r| f(r) > 0).count() as f64 / results.len().max(1) as f64
    };
    ExperimentSummary {
        trials: results.len(),
        median_distortion: median,
        max_distortion: d.last().copied().unwrap_or(f64::NAN),
        far_frequency: freq(|r| r.far_events),
        early_frequency: freq(|r| r.early_events),
        many_frequency: freq(|r| r.many_events),
        detour_violations: results.iter().map(|r| r.detour_violations).sum(),
    }
}

/// One CSV line per trial, header first.
pub fn to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(
        "trial,seed,vertices,minor_vertices,k,rounds,distortion,far_events,early_events,many_events,detour_violations\n",
    );
    for r in &report.trials {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.seed,
            r.vertices,
            r.minor_vertices,
            r.k,
            r.rounds,
            r.distortion,
            r.far_events,
            r.early_events,
            r.many_events,
            r.detour_violations
        ));
    }
    out
}
