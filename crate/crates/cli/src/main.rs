//! Command-line front end for the pscope solver.
//!
//! Three subcommands: `train` fits an L1-regularized linear model with the
//! distributed round solver (in-process threads, TCP, or a single-machine
//! baseline), `gap` measures partition quality around the optimum, and
//! `synth` generates reproducible synthetic problems.
//!
//! Exit codes: 0 success, 1 usage, 2 data or file problems, 3 solver
//! failures.

use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sha2::{Digest, Sha256};

use pscope_core::data::{read_libsvm, Dataset, Instance};
use pscope_core::engine::{run_tcp_worker, train_tcp_loopback, TcpMasterEngine};
use pscope_core::objective::{objective_value, Loss, Model};
use pscope_core::partition::{
    gamma_from_anchors, local_global_gap, sample_anchors, GapReport, Partition, PartitionKind,
};
use pscope_core::solver::{
    default_eta, default_inner_steps, prox_svrg_train, pscope_train, reference_solution,
    train_with_engine, SolverConfig, TrainOutput,
};
use pscope_core::synth::{classification, regression, SynthSpec};

const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_SOLVER: i32 = 3;

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
    fn solver(message: impl Into<String>) -> Self {
        Self { code: EXIT_SOLVER, message: message.into() }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "pscope",
    version,
    about = "Distributed proximal SVRG for L1-regularized linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the trace, weights, and a run manifest.
    Train(TrainArgs),
    /// Measure partition quality: local-global gaps around the optimum.
    Gap(GapArgs),
    /// Generate a synthetic dataset in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Logistic,
    Squared,
}

impl From<LossArg> for Loss {
    fn from(v: LossArg) -> Loss {
        match v {
            LossArg::Logistic => Loss::Logistic,
            LossArg::Squared => Loss::Squared,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    /// Worker threads inside this process.
    Inproc,
    /// TCP transport; self-contained on loopback unless --listen/--connect.
    Tcp,
    /// Single-machine baseline (requires --workers 1).
    Serial,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset in LIBSVM format.
    #[arg(long)]
    data: PathBuf,
    /// Pad the feature dimension up to this many coordinates.
    #[arg(long, default_value_t = 0)]
    min_dim: usize,
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    loss: LossArg,
    /// Ridge weight (strong convexity).
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    /// L1 weight (sparsity).
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    /// uniform | skew:<fraction> | labelsplit | replicate
    #[arg(long, default_value = "uniform")]
    partition: String,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Outer rounds.
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    /// Inner steps per worker per round (default: 2 * ceil(n / workers)).
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Step size (default: 0.1 / smoothness bound).
    #[arg(long)]
    eta: Option<f64>,
    /// Seed for partitioning and sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Update every coordinate every step instead of deferring off-support
    /// coordinates to closed-form recovery. Same result, more work.
    #[arg(long)]
    dense: bool,
    #[arg(long, value_enum, default_value_t = EngineArg::Inproc)]
    engine: EngineArg,
    /// Act as a TCP master: bind this address and wait for workers.
    #[arg(long)]
    listen: Option<String>,
    /// Act as a TCP worker: connect to a master at this address.
    #[arg(long)]
    connect: Option<String>,
    /// This worker's id (with --connect).
    #[arg(long)]
    worker_id: Option<usize>,
    /// Warm-start weights (one value per line).
    #[arg(long)]
    w0: Option<PathBuf>,
    /// Weights of a reference optimum; enables the suboptimality column.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Validate and print the run manifest without training.
    #[arg(long)]
    dry_run: bool,
    /// Output prefix: writes <out>.trace.csv, <out>.weights,
    /// <out>.manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    min_dim: usize,
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    loss: LossArg,
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda2: f64,
    /// Partition to measure.
    #[arg(long, default_value = "uniform")]
    partition: String,
    /// Extra partitions to measure on the same anchors (comma-separated).
    #[arg(long, value_delimiter = ',')]
    compare: Vec<String>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Anchor count.
    #[arg(long, default_value_t = 8)]
    anchors: usize,
    /// Largest anchor distance from the optimum.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Smallest squared anchor distance counted toward the incoherence
    /// estimate.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Local subproblem tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Tolerance for resolving the global optimum.
    #[arg(long, default_value_t = 1e-10)]
    reference_tol: f64,
    /// Also evaluate the gap with the anchor placed exactly at the optimum.
    #[arg(long)]
    anchors_at_optimum: bool,
    /// Output prefix: writes <out>.<partition>.gap.csv per partition and
    /// <out>.gap.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Classify,
    Regress,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, value_enum, default_value_t = TaskArg::Classify)]
    task: TaskArg,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <out>.libsvm and <out>.wtrue.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Gap(args) => run_gap(args),
        Command::Synth(args) => run_synth(args),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("pscope: {}", e.message);
            std::process::exit(e.code);
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn parse_partition(spec: &str) -> CliResult<PartitionKind> {
    match spec {
        "uniform" => Ok(PartitionKind::Uniform),
        "labelsplit" => Ok(PartitionKind::LabelSplit),
        "replicate" => Ok(PartitionKind::Replicate),
        other => {
            if let Some(frac) = other.strip_prefix("skew:") {
                let f: f64 = frac.parse().map_err(|_| {
                    CliError::usage(format!("bad skew fraction '{frac}' (expected a number)"))
                })?;
                if !(0.0..=1.0).contains(&f) {
                    return Err(CliError::usage(format!(
                        "skew fraction must lie in [0, 1], got {f}"
                    )));
                }
                Ok(PartitionKind::LabelSkewed(f))
            } else {
                Err(CliError::usage(format!(
                    "unknown partition '{other}' (expected uniform, skew:<fraction>, \
                     labelsplit, replicate)"
                )))
            }
        }
    }
}

fn partition_slug(kind: PartitionKind) -> String {
    match kind {
        PartitionKind::Uniform => "uniform".into(),
        PartitionKind::Replicate => "replicate".into(),
        PartitionKind::LabelSplit => "labelsplit".into(),
        PartitionKind::LabelSkewed(f) => format!("skew{f}"),
    }
}

fn partition_spec_string(kind: PartitionKind) -> String {
    match kind {
        PartitionKind::LabelSkewed(f) => format!("skew:{f}"),
        other => partition_slug(other),
    }
}

fn load_dataset(path: &Path, min_dim: usize) -> CliResult<Dataset> {
    read_libsvm(path, min_dim)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn sha256_hex(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

/// How the labels were remapped for binary losses and label partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelMap {
    None,
    ZeroOne,
    OneTwo,
}

impl LabelMap {
    fn as_str(self) -> &'static str {
        match self {
            LabelMap::None => "none",
            LabelMap::ZeroOne => "0/1 -> -1/+1",
            LabelMap::OneTwo => "1/2 -> +1/-1",
        }
    }
}

/// Remaps {0,1} or {1,2} labels to {-1,+1} when the loss or partition needs
/// binary labels. Already-conforming labels pass through untouched.
fn normalize_labels(data: Dataset, needed: bool) -> CliResult<(Dataset, LabelMap)> {
    if !needed || data.labels_are_binary() {
        return Ok((data, LabelMap::None));
    }
    let is = |a: f64, b: f64| data.instances().iter().all(|i| i.label == a || i.label == b);
    let (map, f): (LabelMap, fn(f64) -> f64) = if is(0.0, 1.0) {
        (LabelMap::ZeroOne, |y| if y == 1.0 { 1.0 } else { -1.0 })
    } else if is(1.0, 2.0) {
        (LabelMap::OneTwo, |y| if y == 1.0 { 1.0 } else { -1.0 })
    } else {
        return Err(CliError::data(
            "labels must be binary (-1/+1, 0/1, or 1/2) for this loss or partition",
        ));
    };
    let dim = data.dim();
    let instances = data
        .into_instances()
        .into_iter()
        .map(|i| Instance { features: i.features, label: f(i.label) })
        .collect();
    let data = Dataset::from_instances(instances, dim)
        .map_err(|e| CliError::data(e.to_string()))?;
    eprintln!("pscope: remapped labels {}", map.as_str());
    Ok((data, map))
}

fn read_weights(path: &Path, dim: usize, what: &str) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let w: Result<Vec<f64>, _> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect();
    let w = w.map_err(|e| CliError::data(format!("{}: bad weight line: {e}", path.display())))?;
    if w.len() != dim {
        return Err(CliError::data(format!(
            "{}: {what} has {} values but the data dimension is {dim}",
            path.display(),
            w.len()
        )));
    }
    Ok(w)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn weights_to_string(w: &[f64]) -> String {
    let mut s = String::new();
    for v in w {
        let _ = writeln!(s, "{v}");
    }
    s
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn run_train(args: TrainArgs) -> CliResult<()> {
    // Flag interplay first, before any file touches.
    if args.engine != EngineArg::Tcp
        && (args.listen.is_some() || args.connect.is_some() || args.worker_id.is_some())
    {
        return Err(CliError::usage(
            "--listen/--connect/--worker-id require --engine tcp",
        ));
    }
    if args.listen.is_some() && args.connect.is_some() {
        return Err(CliError::usage("--listen and --connect are mutually exclusive"));
    }
    if args.connect.is_some() != args.worker_id.is_some() {
        return Err(CliError::usage(
            "--connect and --worker-id must be given together",
        ));
    }
    if args.engine == EngineArg::Serial && args.workers != 1 {
        return Err(CliError::usage(format!(
            "--engine serial is the single-machine baseline; use --workers 1 (got {})",
            args.workers
        )));
    }
    let kind = parse_partition(&args.partition)?;
    let model = Model::new(args.loss.into(), args.lambda1, args.lambda2)
        .map_err(|e| CliError::usage(e.to_string()))?;

    let raw = load_dataset(&args.data, args.min_dim)?;
    let needs_binary = args.loss == LossArg::Logistic
        || matches!(kind, PartitionKind::LabelSkewed(_) | PartitionKind::LabelSplit);
    let (data, label_map) = normalize_labels(raw, needs_binary)?;

    let part = Partition::make(&data, kind, args.workers, args.seed)
        .map_err(|e| CliError::data(e.to_string()))?;
    for k in 0..part.workers() {
        if part.shard(k).is_empty() {
            return Err(CliError::usage(format!(
                "worker {k} would receive no instances ({} instances over {} workers); \
                 use fewer workers",
                data.n(),
                args.workers
            )));
        }
    }

    let eta = args.eta.unwrap_or_else(|| default_eta(&model, &data));
    let inner_m =
        args.inner_steps.unwrap_or_else(|| default_inner_steps(data.n(), args.workers));
    let config = SolverConfig {
        eta,
        inner_m,
        outer_t: args.rounds,
        workers: args.workers,
        seed: args.seed,
        lazy: !args.dense,
        record_objective: true,
    };
    config.validate(&model).map_err(|e| CliError::usage(e.to_string()))?;

    let w0 = match &args.w0 {
        Some(path) => read_weights(path, data.dim(), "--w0")?,
        None => vec![0.0; data.dim()],
    };
    let reference = match &args.reference {
        Some(path) => {
            let w = read_weights(path, data.dim(), "--reference")?;
            Some(objective_value(&model, &data, &w))
        }
        None => None,
    };

    // TCP worker role: serve rounds, no outputs.
    if let Some(addr) = &args.connect {
        let worker_id = args.worker_id.expect("validated above");
        if args.out.is_some() {
            eprintln!("pscope: worker role writes no outputs; ignoring --out");
        }
        eprintln!("pscope: worker {worker_id} connecting to {addr}");
        run_tcp_worker(addr, worker_id, &model, &data, &part, &config)
            .map_err(|e| CliError::solver(e.to_string()))?;
        eprintln!("pscope: worker {worker_id} done");
        return Ok(());
    }

    let out = args
        .out
        .as_ref()
        .ok_or_else(|| CliError::usage("--out is required (except for TCP workers)"))?;
    let trace_path = suffixed(out, ".trace.csv");
    let weights_path = suffixed(out, ".weights");
    let manifest_path = suffixed(out, ".manifest.json");

    let engine_desc = match (&args.engine, &args.listen) {
        (EngineArg::Inproc, _) => "inproc".to_string(),
        (EngineArg::Serial, _) => "serial".to_string(),
        (EngineArg::Tcp, Some(addr)) => format!("tcp:listen:{addr}"),
        (EngineArg::Tcp, None) => "tcp:loopback".to_string(),
    };
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "train",
        "dataset": {
            "path": args.data.display().to_string(),
            "instances": data.n(),
            "dimension": data.dim(),
            "sha256": sha256_hex(&args.data)?,
            "label_map": label_map.as_str(),
        },
        "model": {
            "loss": format!("{:?}", Loss::from(args.loss)).to_lowercase(),
            "lambda1": args.lambda1,
            "lambda2": args.lambda2,
        },
        "partition": {
            "kind": partition_spec_string(kind),
            "workers": args.workers,
            "seed": args.seed,
            "shard_sizes": part.shards().iter().map(Vec::len).collect::<Vec<_>>(),
        },
        "solver": {
            "rounds": args.rounds,
            "inner_steps": inner_m,
            "eta": eta,
            "seed": args.seed,
            "lazy": !args.dense,
            "engine": engine_desc,
        },
        "reference": args.reference.as_ref().map(|p| json!({
            "path": p.display().to_string(),
            "objective": reference,
        })),
        "outputs": {
            "trace": trace_path.display().to_string(),
            "weights": weights_path.display().to_string(),
        },
    });

    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
        return Ok(());
    }

    let result: TrainOutput = match (&args.engine, &args.listen) {
        (EngineArg::Serial, _) => prox_svrg_train(&model, &data, &config, &w0, reference)
            .map_err(|e| CliError::solver(e.to_string()))?,
        (EngineArg::Inproc, _) => pscope_train(&model, &data, &part, &config, &w0, reference)
            .map_err(|e| CliError::solver(e.to_string()))?,
        (EngineArg::Tcp, None) => train_tcp_loopback(&model, &data, &part, &config, &w0, reference)
            .map_err(|e| CliError::solver(e.to_string()))?,
        (EngineArg::Tcp, Some(addr)) => {
            let listener = TcpListener::bind(addr)
                .map_err(|e| CliError::data(format!("bind {addr}: {e}")))?;
            let local = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
            eprintln!(
                "pscope: listening on {local} for {} workers (round trips: {} rounds)",
                args.workers, args.rounds
            );
            let mut engine = TcpMasterEngine::accept(&listener, &data, &part, &config)
                .map_err(|e| CliError::solver(e.to_string()))?;
            train_with_engine(&mut engine, &model, &data, &config, &w0, reference)
                .map_err(|e| CliError::solver(e.to_string()))?
        }
    };

    write_file(&trace_path, &result.trace.to_csv())?;
    write_file(&weights_path, &weights_to_string(&result.weights))?;
    write_file(
        &manifest_path,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&manifest).expect("manifest serializes")
        ),
    )?;

    let last = result.trace.rows.last().expect("trace has rows");
    let nnz = result.weights.iter().filter(|v| **v != 0.0).count();
    println!(
        "trained {} rounds in {:.2}s: objective {}, nnz {}/{}, comm {} bytes",
        args.rounds,
        last.elapsed_s,
        last.objective.map(|o| o.to_string()).unwrap_or_else(|| "n/a".into()),
        nnz,
        result.weights.len(),
        last.comm_bytes
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gap
// ---------------------------------------------------------------------------

fn run_gap(args: GapArgs) -> CliResult<()> {
    let mut kinds = vec![parse_partition(&args.partition)?];
    for spec in &args.compare {
        if !spec.trim().is_empty() {
            kinds.push(parse_partition(spec.trim())?);
        }
    }
    let model = Model::new(args.loss.into(), args.lambda1, args.lambda2)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let raw = load_dataset(&args.data, args.min_dim)?;
    let needs_binary = args.loss == LossArg::Logistic
        || kinds
            .iter()
            .any(|k| matches!(k, PartitionKind::LabelSkewed(_) | PartitionKind::LabelSplit));
    let (data, _) = normalize_labels(raw, needs_binary)?;

    let (w_star, p_star) = reference_solution(&model, &data, args.reference_tol)
        .map_err(|e| CliError::solver(format!("resolving the optimum: {e}")))?;
    let mut anchors = Vec::new();
    if args.anchors_at_optimum {
        anchors.push(w_star.clone());
    }
    anchors.extend(sample_anchors(&w_star, args.epsilon, args.radius, args.anchors, args.seed));

    let mut summaries = Vec::new();
    for kind in kinds {
        let part = Partition::make(&data, kind, args.workers, args.seed)
            .map_err(|e| CliError::data(e.to_string()))?;
        let mut csv = GapReport::csv_header(args.workers);
        csv.push('\n');
        let mut max_gap = f64::NEG_INFINITY;
        for a in &anchors {
            let report = local_global_gap(&model, &data, &part, a, &w_star, args.tol)
                .map_err(|e| CliError::solver(format!("{kind:?}: {e}")))?;
            max_gap = max_gap.max(report.gap);
            csv.push_str(&report.csv_row());
            csv.push('\n');
        }
        let gamma =
            gamma_from_anchors(&model, &data, &part, &anchors, args.epsilon, &w_star, args.tol)
                .map_err(|e| CliError::solver(format!("{kind:?}: {e}")))?;
        let slug = partition_slug(kind);
        let csv_path = suffixed(&args.out, &format!(".{slug}.gap.csv"));
        write_file(&csv_path, &csv)?;
        println!(
            "partition={} gamma={gamma:.6e} max_gap={max_gap:.6e} anchors={} csv={}",
            partition_spec_string(kind),
            anchors.len(),
            csv_path.display()
        );
        summaries.push(json!({
            "partition": partition_spec_string(kind),
            "gamma": gamma,
            "max_gap": max_gap,
            "csv": csv_path.display().to_string(),
        }));
    }

    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "gap",
        "dataset": {
            "path": args.data.display().to_string(),
            "instances": data.n(),
            "dimension": data.dim(),
            "sha256": sha256_hex(&args.data)?,
        },
        "model": {
            "loss": format!("{:?}", Loss::from(args.loss)).to_lowercase(),
            "lambda1": args.lambda1,
            "lambda2": args.lambda2,
        },
        "workers": args.workers,
        "seed": args.seed,
        "anchors": args.anchors,
        "anchors_at_optimum": args.anchors_at_optimum,
        "radius": args.radius,
        "epsilon": args.epsilon,
        "tol": args.tol,
        "reference_tol": args.reference_tol,
        "reference_objective": p_star,
        "partitions": summaries,
    });
    write_file(
        &suffixed(&args.out, ".gap.manifest.json"),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&manifest).expect("manifest serializes")
        ),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn run_synth(args: SynthArgs) -> CliResult<()> {
    if args.n == 0 || args.d == 0 {
        return Err(CliError::usage("--n and --d must be positive"));
    }
    if !(0.0..=1.0).contains(&args.density) {
        return Err(CliError::usage(format!(
            "--density must lie in [0, 1], got {}",
            args.density
        )));
    }
    if args.task == TaskArg::Classify && args.n % 2 != 0 {
        return Err(CliError::usage(
            "--task classify balances the labels exactly; --n must be even",
        ));
    }
    let spec = SynthSpec {
        n: args.n,
        d: args.d,
        density: args.density,
        noise: args.noise,
        seed: args.seed,
    };
    let (data, w_true) = match args.task {
        TaskArg::Classify => classification(&spec),
        TaskArg::Regress => regression(&spec),
    };
    let data_path = suffixed(&args.out, ".libsvm");
    let wtrue_path = suffixed(&args.out, ".wtrue");
    write_file(&data_path, &data.to_libsvm_string())?;
    write_file(&wtrue_path, &weights_to_string(&w_true))?;
    println!(
        "wrote {} ({} x {}, {} nonzeros) and {}",
        data_path.display(),
        data.n(),
        data.dim(),
        data.instances().iter().map(|i| i.features.nnz()).sum::<usize>(),
        wtrue_path.display()
    );
    Ok(())
}
