//! Training loops: the distributed variance-reduced solver, its
//! single-machine specialization, a plain proximal-gradient baseline, and a
//! high-accuracy reference solve.
//!
//! One outer round of the distributed solver works in two synchronized
//! phases. First every worker reports the loss-gradient sum over its shard
//! at the current iterate, and the master normalizes the total into the
//! full-data mean `z`. Then every worker runs `inner_m` stochastic proximal
//! steps over its own shard — each step corrects the sampled instance's
//! gradient by `z` so the expected step direction matches the global
//! objective — and the master averages the workers' results into the next
//! iterate. All sampling comes from per-worker seeded streams, so a run is
//! a pure function of its inputs.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::engine::{EngineError, InProcessEngine, RoundEngine};
use crate::objective::{
    grad_sum, objective_value, prox_l1, smoothness_bound, ConfigError, Model,
};
use crate::partition::Partition;
use crate::recovery::recover_coordinate;
use crate::rngutil::child_seed;

/// Numeric knobs for a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Inner step size.
    pub eta: f64,
    /// Stochastic steps per worker per outer round.
    pub inner_m: usize,
    /// Number of outer rounds.
    pub outer_t: usize,
    /// Expected worker count; must match the partition.
    pub workers: usize,
    /// Run seed; worker streams are derived from it.
    pub seed: u64,
    /// Skip untouched coordinates inside epochs and recover them in closed
    /// form instead of updating all of them every step.
    pub lazy: bool,
    /// Record the objective (and suboptimality, when a reference is given)
    /// in the trace. Costs one full-data pass per round.
    pub record_objective: bool,
}

impl SolverConfig {
    /// Checks internal consistency and compatibility with the model.
    pub fn validate(&self, model: &Model) -> Result<(), ConfigError> {
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(ConfigError(format!("eta must be finite and positive, got {}", self.eta)));
        }
        if self.eta * model.lambda1 >= 1.0 {
            return Err(ConfigError(format!(
                "eta * lambda1 must stay below 1 for the shrink step, got {}",
                self.eta * model.lambda1
            )));
        }
        if self.inner_m == 0 {
            return Err(ConfigError("inner_m must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Step size used when the caller does not pick one: a conservative
/// fraction of the inverse smoothness bound.
pub fn default_eta(model: &Model, data: &Dataset) -> f64 {
    0.1 / smoothness_bound(model, data).max(1e-12)
}

/// Inner steps per round used when the caller does not pick one: two
/// passes over a shard of the expected size.
pub fn default_inner_steps(n: usize, workers: usize) -> usize {
    2 * n.div_ceil(workers.max(1)).max(1)
}

/// One trace record per outer round (plus one for the initial point).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    /// Objective at the current iterate; absent when recording is off.
    pub objective: Option<f64>,
    /// Objective minus the caller-supplied reference value, when both exist.
    pub suboptimality: Option<f64>,
    /// Wall-clock seconds since training started.
    pub elapsed_s: f64,
    /// Cumulative communicated payload bytes.
    pub comm_bytes: u64,
    /// Cumulative per-coordinate update operations executed.
    pub coord_touches: u64,
}

/// Per-round progress of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str =
        "outer_iter,objective,suboptimality,elapsed_s,comm_bytes,coord_touches";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let obj = row.objective.map(|v| v.to_string()).unwrap_or_default();
            let sub = row.suboptimality.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.outer_iter, obj, sub, row.elapsed_s, row.comm_bytes, row.coord_touches
            )
            .unwrap();
        }
        out
    }
}

/// Final iterate plus the per-round trace.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub weights: Vec<f64>,
    pub trace: TrainTrace,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("partition has {got} workers but the config expects {want}")]
    WorkerMismatch { want: usize, got: usize },
    #[error("non-finite value at outer round {round} ({place})")]
    NumericFailure { round: usize, place: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("reference solve stalled: best residual {residual:.3e} > tolerance {tol:.3e}")]
    ReferenceDidNotConverge { residual: f64, tol: f64 },
}

/// Draws one epoch's instance positions (into a shard) with replacement.
/// Exactly `m` values are consumed from the stream, so callers can
/// reproduce a worker's sampling by replaying its stream.
pub fn draw_epoch_samples(rng: &mut ChaCha8Rng, m: usize, shard_len: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(0..shard_len)).collect()
}

/// Runs one worker epoch: `samples.len()` variance-reduced proximal steps
/// over the shard, starting from (and correcting against) `anchor`, using
/// the full-data mean gradient `z`. Returns the resulting iterate and the
/// number of per-coordinate updates executed.
///
/// The dense path updates all `d` coordinates every step. The lazy path
/// touches only the sampled instance's support and reconstructs skipped
/// coordinates in closed form; on the same inputs both return the same
/// iterate up to closed-form rounding (bitwise equal when every instance is
/// fully dense).
///
/// If a step overflows to a non-finite value (the step size is far too
/// large), the epoch stops early and returns the poisoned iterate so the
/// driver's finiteness check can report the failure instead of the overflow
/// cascading through later steps.
#[allow(clippy::too_many_arguments)]
pub fn worker_epoch(
    model: &Model,
    data: &Dataset,
    shard: &[usize],
    anchor: &[f64],
    z: &[f64],
    eta: f64,
    lazy: bool,
    samples: &[usize],
) -> (Vec<f64>, u64) {
    let d = data.dim();
    assert_eq!(anchor.len(), d, "anchor length must match dimension");
    assert_eq!(z.len(), d, "gradient length must match dimension");
    assert!(!shard.is_empty(), "worker shard must not be empty");
    assert!(
        eta > 0.0 && eta * model.lambda1 < 1.0,
        "step size must be positive with eta*lambda1 < 1"
    );
    if lazy {
        lazy_epoch(model, data, shard, anchor, z, eta, samples)
    } else {
        dense_epoch(model, data, shard, anchor, z, eta, samples)
    }
}

fn dense_epoch(
    model: &Model,
    data: &Dataset,
    shard: &[usize],
    anchor: &[f64],
    z: &[f64],
    eta: f64,
    samples: &[usize],
) -> (Vec<f64>, u64) {
    let d = data.dim();
    let scale = 1.0 - eta * model.lambda1;
    let thr = eta * model.lambda2;
    let mut u = anchor.to_vec();
    let mut touches = 0u64;
    for &s in samples {
        let inst = &data.instances()[shard[s]];
        let g_u = model.loss.derivative(inst.features.dot(&u), inst.label);
        let g_a = model.loss.derivative(inst.features.dot(anchor), inst.label);
        let diff = g_u - g_a;
        let idxs = inst.features.indices();
        let vals = inst.features.values();
        let mut ptr = 0;
        let mut bad = false;
        for (j, uj) in u.iter_mut().enumerate() {
            let vj = if ptr < idxs.len() && idxs[ptr] == j {
                let v = diff * vals[ptr] + z[j];
                ptr += 1;
                v
            } else {
                z[j]
            };
            *uj = prox_l1(scale * *uj - eta * vj, thr);
            bad |= !uj.is_finite();
        }
        touches += d as u64;
        if bad {
            return (u, touches);
        }
    }
    (u, touches)
}

fn lazy_epoch(
    model: &Model,
    data: &Dataset,
    shard: &[usize],
    anchor: &[f64],
    z: &[f64],
    eta: f64,
    samples: &[usize],
) -> (Vec<f64>, u64) {
    let d = data.dim();
    let scale = 1.0 - eta * model.lambda1;
    let thr = eta * model.lambda2;
    let mut u = anchor.to_vec();
    // Step index at which each coordinate was last brought up to date.
    let mut fresh = vec![0u64; d];
    let mut touches = 0u64;
    for (step, &s) in samples.iter().enumerate() {
        let step = step as u64;
        let inst = &data.instances()[shard[s]];
        // Bring the support up to date before using it.
        for (j, _) in inst.features.iter() {
            let gap = step - fresh[j];
            if gap > 0 {
                u[j] = recover_coordinate(u[j], z[j], model.lambda1, model.lambda2, eta, gap);
            }
            fresh[j] = step;
        }
        let g_u = model.loss.derivative(inst.features.dot(&u), inst.label);
        let g_a = model.loss.derivative(inst.features.dot(anchor), inst.label);
        let diff = g_u - g_a;
        let mut bad = false;
        for (j, xv) in inst.features.iter() {
            let vj = diff * xv + z[j];
            u[j] = prox_l1(scale * u[j] - eta * vj, thr);
            bad |= !u[j].is_finite();
            fresh[j] = step + 1;
            touches += 1;
        }
        // An overflowed coordinate would trip the next recovery's input
        // checks; hand the poisoned iterate straight to the caller instead.
        if bad {
            return (u, touches);
        }
    }
    // Final pass: everything not materialized at the end catches up.
    let m = samples.len() as u64;
    for j in 0..d {
        let gap = m - fresh[j];
        if gap > 0 {
            u[j] = recover_coordinate(u[j], z[j], model.lambda1, model.lambda2, eta, gap);
        }
        touches += 1;
    }
    (u, touches)
}

/// Predicted touch count of [`worker_epoch`] for the given samples, used by
/// drivers that cannot observe the worker's counter directly.
pub fn predicted_touches(data: &Dataset, shard: &[usize], lazy: bool, samples: &[usize]) -> u64 {
    if lazy {
        let support: u64 = samples
            .iter()
            .map(|&s| data.instances()[shard[s]].features.nnz() as u64)
            .sum();
        support + data.dim() as u64
    } else {
        samples.len() as u64 * data.dim() as u64
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[allow(clippy::too_many_arguments)]
fn trace_row(
    t: usize,
    model: &Model,
    data: &Dataset,
    w: &[f64],
    record: bool,
    reference: Option<f64>,
    start: Instant,
    comm: u64,
    touches: u64,
) -> TraceRow {
    let objective = record.then(|| objective_value(model, data, w));
    TraceRow {
        outer_iter: t,
        objective,
        suboptimality: objective.and_then(|o| reference.map(|r| o - r)),
        elapsed_s: start.elapsed().as_secs_f64(),
        comm_bytes: comm,
        coord_touches: touches,
    }
}

/// Trains with the given round engine. `reference`, when provided, is the
/// optimal objective value used for the trace's suboptimality column.
pub fn train_with_engine<E: RoundEngine>(
    engine: &mut E,
    model: &Model,
    data: &Dataset,
    config: &SolverConfig,
    w0: &[f64],
    reference: Option<f64>,
) -> Result<TrainOutput, SolverError> {
    config.validate(model)?;
    if engine.workers() != config.workers {
        return Err(SolverError::WorkerMismatch { want: config.workers, got: engine.workers() });
    }
    if w0.len() != data.dim() {
        return Err(ConfigError(format!(
            "initial point has length {} but the data dimension is {}",
            w0.len(),
            data.dim()
        ))
        .into());
    }
    let start = Instant::now();
    let mut w = w0.to_vec();
    let mut comm = 0u64;
    let mut touches = 0u64;
    let mut trace = TrainTrace::default();
    trace.rows.push(trace_row(
        0, model, data, &w, config.record_objective, reference, start, comm, touches,
    ));
    for t in 0..config.outer_t {
        let round = engine.run_round(&w, t as u32)?;
        comm += round.comm_bytes;
        touches += round.coord_touches;
        if !finite(&round.next_w) {
            return Err(SolverError::NumericFailure {
                round: t,
                place: "averaged iterate".into(),
            });
        }
        w = round.next_w;
        trace.rows.push(trace_row(
            t + 1, model, data, &w, config.record_objective, reference, start, comm, touches,
        ));
    }
    engine.finish()?;
    Ok(TrainOutput { weights: w, trace })
}

/// Trains with in-process workers (one thread per worker, bounded by the
/// `PSCOPE_THREADS` environment variable; the bound never changes results).
pub fn pscope_train(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    config: &SolverConfig,
    w0: &[f64],
    reference: Option<f64>,
) -> Result<TrainOutput, SolverError> {
    config.validate(model)?;
    let mut engine = InProcessEngine::new(model, data, part, config)?;
    train_with_engine(&mut engine, model, data, config, w0, reference)
}

/// Single-machine variance-reduced proximal training: the whole dataset is
/// one shard, rounds alternate a full gradient pass with one stochastic
/// epoch. Behaves exactly like the distributed solver with one worker — the
/// traces match bit for bit apart from wall time — but shares none of its
/// coordination machinery.
pub fn prox_svrg_train(
    model: &Model,
    data: &Dataset,
    config: &SolverConfig,
    w0: &[f64],
    reference: Option<f64>,
) -> Result<TrainOutput, SolverError> {
    config.validate(model)?;
    if config.workers != 1 {
        return Err(ConfigError(format!(
            "single-machine training uses one worker, got {}",
            config.workers
        ))
        .into());
    }
    if w0.len() != data.dim() {
        return Err(ConfigError(format!(
            "initial point has length {} but the data dimension is {}",
            w0.len(),
            data.dim()
        ))
        .into());
    }
    let n = data.n();
    let d = data.dim();
    let shard: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.seed, 0));
    let start = Instant::now();
    let mut w = w0.to_vec();
    let mut comm = 0u64;
    let mut touches = 0u64;
    let mut trace = TrainTrace::default();
    trace.rows.push(trace_row(
        0, model, data, &w, config.record_objective, reference, start, comm, touches,
    ));
    for t in 0..config.outer_t {
        let mut z = grad_sum(model.loss, data, 0..n, &w);
        for v in &mut z {
            *v /= n as f64;
        }
        if !finite(&z) {
            return Err(SolverError::NumericFailure { round: t, place: "full gradient".into() });
        }
        let samples = draw_epoch_samples(&mut rng, config.inner_m, n);
        let (u, epoch_touches) =
            worker_epoch(model, data, &shard, &w, &z, config.eta, config.lazy, &samples);
        if !finite(&u) {
            return Err(SolverError::NumericFailure { round: t, place: "epoch iterate".into() });
        }
        // Mirror the distributed accounting: per round, two broadcasts and
        // two gathers of d floats per worker.
        comm += 4 * d as u64 * 8;
        touches += epoch_touches;
        let mut next = u;
        for v in &mut next {
            *v /= 1.0; // one-worker average, kept for bitwise parity
        }
        w = next;
        trace.rows.push(trace_row(
            t + 1, model, data, &w, config.record_objective, reference, start, comm, touches,
        ));
    }
    Ok(TrainOutput { weights: w, trace })
}

/// Deterministic proximal gradient descent with a fixed step: exactly
/// `steps` iterations of `w <- prox(w - eta * grad_smooth(w))`, where the
/// smooth gradient includes the ridge term directly.
pub fn pgd_train(model: &Model, data: &Dataset, w0: &[f64], eta: f64, steps: usize) -> Vec<f64> {
    assert_eq!(w0.len(), data.dim(), "initial point must match dimension");
    assert!(eta > 0.0 && eta.is_finite());
    let n = data.n().max(1) as f64;
    let thr = eta * model.lambda2;
    let mut w = w0.to_vec();
    for _ in 0..steps {
        let mut g = grad_sum(model.loss, data, 0..data.n(), &w);
        for j in 0..w.len() {
            g[j] = g[j] / n + model.lambda1 * w[j];
            w[j] = prox_l1(w[j] - eta * g[j], thr);
        }
    }
    w
}

const REFERENCE_SEED: u64 = 0xD1CE;
const REFERENCE_MAX_ROUNDS: usize = 2000;

/// High-accuracy solve used as ground truth by diagnostics and tests.
/// Returns the minimizer and its objective value once the proximal
/// fixed-point residual (infinity norm, at step `1/L`) reaches `tol`.
pub fn reference_solution(
    model: &Model,
    data: &Dataset,
    tol: f64,
) -> Result<(Vec<f64>, f64), SolverError> {
    reference_solution_seeded(model, data, tol, REFERENCE_SEED)
}

/// [`reference_solution`] with an explicit sampling seed. Any seed lands on
/// the same optimum to within the tolerance — strong convexity of the
/// regularized objective makes the target unique.
pub fn reference_solution_seeded(
    model: &Model,
    data: &Dataset,
    tol: f64,
    seed: u64,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = data.n();
    let d = data.dim();
    let lip = smoothness_bound(model, data).max(1e-12);
    let eta = 0.25 / lip;
    let eta_check = 1.0 / lip;
    let inner_m = 2 * n;
    let shard: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0));
    let mut w = vec![0.0; d];
    let mut best = f64::INFINITY;
    for _round in 0..REFERENCE_MAX_ROUNDS {
        let mut z = grad_sum(model.loss, data, 0..n, &w);
        for v in &mut z {
            *v /= n as f64;
        }
        // Fixed-point residual of one full proximal step.
        let mut residual = 0.0f64;
        for j in 0..d {
            let g = z[j] + model.lambda1 * w[j];
            let stepped = prox_l1(w[j] - eta_check * g, eta_check * model.lambda2);
            residual = residual.max((stepped - w[j]).abs());
        }
        best = best.min(residual);
        if residual <= tol {
            return Ok((w.clone(), objective_value(model, data, &w)));
        }
        let samples = draw_epoch_samples(&mut rng, inner_m, n);
        let (u, _) = worker_epoch(model, data, &shard, &w, &z, eta, true, &samples);
        if !finite(&u) {
            return Err(SolverError::NumericFailure {
                round: _round,
                place: "reference epoch".into(),
            });
        }
        w = u;
    }
    Err(SolverError::ReferenceDidNotConverge { residual: best, tol })
}
