use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use spr_core::ball_growing::{run, GrowthParams, IncrementDistribution, LogBase, RunTrace};
use spr_core::experiment::{run_experiment, to_csv, InstanceSource};
use spr_core::generate::RandomGraphSpec;
use spr_core::io::{parse_instance, write_instance};
use spr_core::partition::{
    contract, distortion, oracle_optimal, validate, PairDistortion, PartitionError, TerminalPartition,
};
use spr_core::preprocess::{exact_minor, verify_exact, MinorOp};
use spr_core::tail_bounds::{certify, CertRow, Suite};
use spr_core::Instance;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "spr", version, about = "Steiner point removal toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a graph to an exact-distance minor.
    Preprocess {
        input: PathBuf,
        /// Reduced graph destination; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Sidecar JSON destination; defaults to `<output>.json`.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Partition the terminals by ball growing and report the distortion.
    Run {
        input: PathBuf,
        #[command(flatten)]
        growth: GrowthArgs,
        /// Write the full run trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Partition the input graph as given.
        #[arg(long)]
        no_preprocess: bool,
    },
    /// Distortion of a given partition.
    Eval { input: PathBuf, partition: PathBuf },
    /// Repeated trials with bad-event and detour instrumentation.
    Experiment {
        /// Reuse this graph in every trial instead of random graphs.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Extra edges beyond the spanning tree; defaults to `n`.
        #[arg(long)]
        extra_edges: Option<usize>,
        #[arg(long, default_value_t = 10)]
        max_weight: u32,
        /// Per-trial CSV destination.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        growth: GrowthArgs,
    },
    /// Certify the exponential tail bounds numerically.
    Tailcheck {
        /// Suites to run; all when omitted.
        #[arg(long, value_enum)]
        suite: Vec<SuiteArg>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Brute-force the minimum distortion (at most 8 non-terminals).
    Oracle { input: PathBuf },
}

#[derive(Args)]
struct GrowthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 5400.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0 / 27.0)]
    c2: f64,
    #[arg(long, default_value_t = 30.0)]
    c3: f64,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long, value_enum, default_value_t = LogBaseArg::Natural)]
    log_base: LogBaseArg,
    /// Radius increment distribution; bounded-uniform is experimental.
    #[arg(long, value_enum, default_value_t = IncrementArg::Exponential)]
    increment: IncrementArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogBaseArg {
    Natural,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum IncrementArg {
    Exponential,
    BoundedUniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Cdf,
    Lemma4,
    Lemma5,
    Lemma6,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Cdf => Suite::Cdf,
            SuiteArg::Lemma4 => Suite::Lemma4,
            SuiteArg::Lemma5 => Suite::Lemma5,
            SuiteArg::Lemma6 => Suite::Lemma6,
        }
    }
}

impl GrowthArgs {
    fn params(&self, seed: u64) -> GrowthParams {
        GrowthParams {
            delta: self.delta,
            log_base: match self.log_base {
                LogBaseArg::Natural => LogBase::Natural,
                LogBaseArg::Binary => LogBase::Binary,
            },
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            max_rounds: self.max_rounds,
            seed,
            increment: match self.increment {
                IncrementArg::Exponential => IncrementDistribution::Exponential,
                IncrementArg::BoundedUniform => IncrementDistribution::BoundedUniform,
            },
        }
    }
}

/// Exit 1 for validation failures, 2 for bad input or usage.
enum Failure {
    Validation(anyhow::Error),
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn effective_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    eprintln!("seed: {seed}");
    seed
}

fn read_instance(path: &Path) -> anyhow::Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_out(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema_version: u32,
    vertex_map: &'a [Option<usize>],
    original_vertices: usize,
    original_edges: usize,
    minor_vertices: usize,
    minor_edges: usize,
    non_terminals: usize,
    size_bound: usize,
    passes: usize,
    max_abs_deviation: f64,
    contraction_log: &'a [MinorOp],
}

#[derive(Serialize, Deserialize)]
struct PartitionOut {
    schema_version: u32,
    assignment: Vec<usize>,
    seed: u64,
    distortion: f64,
    rounds: usize,
    pairs: Vec<PairDistortion>,
}

#[derive(Deserialize)]
struct PartitionIn {
    assignment: Vec<usize>,
}

#[derive(Serialize)]
struct TraceOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    trace: &'a RunTrace,
}

#[derive(Serialize)]
struct DistortionOut {
    schema_version: u32,
    distortion: f64,
    pairs: Vec<PairDistortion>,
}

#[derive(Serialize)]
struct OracleOut {
    schema_version: u32,
    distortion: f64,
    assignment: Vec<usize>,
}

#[derive(Serialize)]
struct TailcheckOut {
    schema_version: u32,
    seed: u64,
    samples: usize,
    passed: bool,
    rows: Vec<CertRow>,
}

fn partition_failure(e: PartitionError) -> Failure {
    match e {
        PartitionError::InvalidPartition(_) | PartitionError::TooLarge { .. } => invalid(e),
        other => Failure::Usage(other.into()),
    }
}

fn cmd_preprocess(input: &Path, output: Option<&Path>, sidecar: Option<&Path>) -> Result<(), Failure> {
    let inst = read_instance(input)?;
    let pre = exact_minor(&inst);
    let report = verify_exact(&inst, &pre).map_err(invalid)?;
    let text = write_instance(&pre.minor);
    let side = Sidecar {
        schema_version: SCHEMA_VERSION,
        vertex_map: &pre.vertex_map,
        original_vertices: inst.vertex_count(),
        original_edges: inst.graph().edge_count(),
        minor_vertices: pre.minor.vertex_count(),
        minor_edges: pre.minor.graph().edge_count(),
        non_terminals: report.non_terminals,
        size_bound: report.size_bound,
        passes: pre.passes,
        max_abs_deviation: report.max_abs_deviation,
        contraction_log: &pre.contraction_log,
    };
    let side_path = sidecar.map(Path::to_path_buf).or_else(|| output.map(|o| {
        let mut p = o.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }));
    match output {
        Some(o) => write_out(o, &text)?,
        None => emit(&text)?,
    }
    if let Some(p) = side_path {
        write_out(&p, &to_json(&side)?)?;
    }
    eprintln!(
        "{} -> {} vertices, {} non-terminals (bound {})",
        inst.vertex_count(),
        pre.minor.vertex_count(),
        report.non_terminals,
        report.size_bound
    );
    Ok(())
}

fn cmd_run(input: &Path, growth: &GrowthArgs, trace_path: Option<&Path>, no_preprocess: bool) -> Result<(), Failure> {
    let mut inst = read_instance(input)?;
    if !no_preprocess {
        inst = exact_minor(&inst).minor;
    }
    let seed = effective_seed(growth.seed);
    let params = growth.params(seed);
    if !params.in_analyzed_regime() {
        eprintln!("warning: parameters outside the analyzed regime");
    }
    let (p, trace) = run(&inst, &params).map_err(invalid)?;
    let minor = contract(&inst, &p).map_err(partition_failure)?;
    let report = distortion(&inst, &minor).map_err(partition_failure)?;
    if let Some(path) = trace_path {
        write_out(path, &to_json(&TraceOut { schema_version: SCHEMA_VERSION, trace: &trace })?)?;
    }
    let out = PartitionOut {
        schema_version: SCHEMA_VERSION,
        assignment: p.assignment,
        seed,
        distortion: report.max_ratio,
        rounds: trace.total_rounds(),
        pairs: report.pairs,
    };
    emit(&to_json(&out)?)?;
    Ok(())
}

fn cmd_eval(input: &Path, partition: &Path) -> Result<(), Failure> {
    let inst = read_instance(input)?;
    let text = fs::read_to_string(partition).with_context(|| format!("reading {}", partition.display()))?;
    let parsed: PartitionIn = serde_json::from_str(&text).with_context(|| format!("parsing {}", partition.display()))?;
    let p = TerminalPartition::new(parsed.assignment);
    let violations = validate(&inst, &p);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Err(invalid(PartitionError::InvalidPartition(violations)));
    }
    let minor = contract(&inst, &p).map_err(partition_failure)?;
    let report = distortion(&inst, &minor).map_err(partition_failure)?;
    emit(&to_json(&DistortionOut { schema_version: SCHEMA_VERSION, distortion: report.max_ratio, pairs: report.pairs })?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    graph: Option<&Path>,
    trials: usize,
    n: usize,
    k: usize,
    extra_edges: Option<usize>,
    max_weight: u32,
    csv: Option<&Path>,
    growth: &GrowthArgs,
) -> Result<(), Failure> {
    let source = match graph {
        Some(path) => InstanceSource::Fixed(read_instance(path)?),
        None => InstanceSource::Random(RandomGraphSpec { n, k, extra_edges: extra_edges.unwrap_or(n), max_weight }),
    };
    let seed = effective_seed(growth.seed);
    let params = growth.params(seed);
    let report = run_experiment(&source, &params, trials, seed).map_err(invalid)?;
    if let Some(path) = csv {
        write_out(path, &to_csv(&report))?;
    }
    let s = &report.summary;
    eprintln!(
        "{} trials: median distortion {:.4}, max {:.4}; far {:.3}, early {:.3}, many {:.3}",
        s.trials, s.median_distortion, s.max_distortion, s.far_frequency, s.early_frequency, s.many_frequency
    );
    emit(&to_json(&report)?)?;
    if s.detour_violations > 0 {
        return Err(invalid(anyhow!("{} detour paths shorter than the minor distance", s.detour_violations)));
    }
    Ok(())
}

fn cmd_tailcheck(suites: &[SuiteArg], samples: usize, seed: Option<u64>) -> Result<(), Failure> {
    let seed = effective_seed(seed);
    let suites: Vec<Suite> =
        if suites.is_empty() { Suite::ALL.to_vec() } else { suites.iter().map(|&s| s.into()).collect() };
    let mut rows = Vec::new();
    for s in suites {
        rows.extend(certify(s, samples, seed)?);
    }
    let passed = rows.iter().filter(|r| r.certified).all(|r| r.passed);
    emit(&to_json(&TailcheckOut { schema_version: SCHEMA_VERSION, seed, samples, passed, rows })?)?;
    if !passed {
        return Err(invalid(anyhow!("tail-bound certification failed")));
    }
    Ok(())
}

fn cmd_oracle(input: &Path) -> Result<(), Failure> {
    let inst = read_instance(input)?;
    let best = oracle_optimal(&inst).map_err(partition_failure)?;
    emit(&to_json(&OracleOut {
            schema_version: SCHEMA_VERSION,
            distortion: best.distortion,
            assignment: best.partition.assignment
        })?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Preprocess { input, output, sidecar } => cmd_preprocess(input, output.as_deref(), sidecar.as_deref()),
        Command::Run { input, growth, trace, no_preprocess } => cmd_run(input, growth, trace.as_deref(), *no_preprocess),
        Command::Eval { input, partition } => cmd_eval(input, partition),
        Command::Experiment { graph, trials, n, k, extra_edges, max_weight, csv, growth } => {
            cmd_experiment(graph.as_deref(), *trials, *n, *k, *extra_edges, *max_weight, csv.as_deref(), growth)
        }
        Command::Tailcheck { suite, samples, seed } => cmd_tailcheck(suite, *samples, *seed),
        Command::Oracle { input } => cmd_oracle(input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
