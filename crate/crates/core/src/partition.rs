//! Assigning instances to workers, and measuring how much a given
//! assignment hurts optimization.
//!
//! Each worker `k` optimizes a corrected local surrogate
//!
//! ```text
//! P_k(w; a) = F_k(w) + G_k(a) . w + lambda2 * |w|_1
//! ```
//!
//! where `F_k` is the shard's mean smooth loss plus the ridge term and
//! `G_k(a)` is the gradient correction that makes the surrogates agree with
//! the global objective to first order at the anchor `a`. The local-global
//! gap — the global optimum minus the average of the locally attainable
//! optima — quantifies partition quality: zero for replicated data,
//! positive when shards disagree.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;
use crate::objective::{
    self, grad_sum, l1_norm, loss_sum, norm_sq, prox_l1, smoothness_bound_over, Model,
};
use crate::rngutil::standard_normal;

/// How instances are assigned to workers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionKind {
    /// Random shuffle dealt round-robin: shard sizes differ by at most one.
    Uniform,
    /// Binary labels split unevenly: the given fraction of positives (and
    /// one minus it of negatives) go to the first half of the workers.
    LabelSkewed(f64),
    /// All positives on the first half of the workers, all negatives on the
    /// second half. The most hostile label-based assignment.
    LabelSplit,
    /// Every worker sees the whole dataset.
    Replicate,
}

impl std::fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartitionKind::Uniform => write!(f, "uniform"),
            PartitionKind::LabelSkewed(frac) => write!(f, "skew:{frac}"),
            PartitionKind::LabelSplit => write!(f, "labelsplit"),
            PartitionKind::Replicate => write!(f, "replicate"),
        }
    }
}

impl std::str::FromStr for PartitionKind {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, PartitionError> {
        match s {
            "uniform" => Ok(PartitionKind::Uniform),
            "labelsplit" => Ok(PartitionKind::LabelSplit),
            "replicate" => Ok(PartitionKind::Replicate),
            _ => {
                if let Some(frac) = s.strip_prefix("skew:") {
                    let f: f64 = frac
                        .parse()
                        .map_err(|_| PartitionError::BadKind(s.to_string()))?;
                    Ok(PartitionKind::LabelSkewed(f))
                } else {
                    Err(PartitionError::BadKind(s.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("worker count must be >= 1")]
    NoWorkers,
    #[error("label-based partitions need an even worker count, got {0}")]
    OddWorkers(usize),
    #[error("label-based partitions require labels in {{-1, +1}}")]
    NonBinaryLabels,
    #[error("skew fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("unknown partition kind '{0}' (expected uniform, skew:<fraction>, labelsplit, replicate)")]
    BadKind(String),
    #[error("worker curvature must be positive, got {0}")]
    BadCurvature(f64),
}

/// A concrete assignment of instance indices to workers. Shards are stored
/// sorted; for disjoint kinds they cover `0..n` exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    kind: PartitionKind,
    shards: Vec<Vec<usize>>,
    n: usize,
}

impl Partition {
    /// Builds a partition of `data` over `workers` shards. `seed` fixes the
    /// shuffles, so equal inputs give equal partitions.
    pub fn make(
        data: &Dataset,
        kind: PartitionKind,
        workers: usize,
        seed: u64,
    ) -> Result<Self, PartitionError> {
        let n = data.n();
        if n == 0 {
            return Err(PartitionError::EmptyDataset);
        }
        if workers == 0 {
            return Err(PartitionError::NoWorkers);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shards: Vec<Vec<usize>> = vec![Vec::new(); workers];
        match kind {
            PartitionKind::Replicate => {
                let all: Vec<usize> = (0..n).collect();
                shards = vec![all; workers];
            }
            PartitionKind::Uniform => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                for (pos, idx) in order.into_iter().enumerate() {
                    shards[pos % workers].push(idx);
                }
            }
            PartitionKind::LabelSkewed(frac) => {
                if !(0.0..=1.0).contains(&frac) {
                    return Err(PartitionError::BadFraction(frac));
                }
                let (pos, neg) = split_binary_labels(data, workers)?;
                let mut first: Vec<usize> = Vec::new();
                let mut second: Vec<usize> = Vec::new();
                let mut pos = pos;
                let mut neg = neg;
                pos.shuffle(&mut rng);
                neg.shuffle(&mut rng);
                let pos_first = (frac * pos.len() as f64).round() as usize;
                let neg_first = ((1.0 - frac) * neg.len() as f64).round() as usize;
                first.extend_from_slice(&pos[..pos_first.min(pos.len())]);
                first.extend_from_slice(&neg[..neg_first.min(neg.len())]);
                second.extend_from_slice(&pos[pos_first.min(pos.len())..]);
                second.extend_from_slice(&neg[neg_first.min(neg.len())..]);
                first.shuffle(&mut rng);
                second.shuffle(&mut rng);
                let half = workers / 2;
                for (pos, idx) in first.into_iter().enumerate() {
                    shards[pos % half].push(idx);
                }
                for (pos, idx) in second.into_iter().enumerate() {
                    shards[half + pos % half].push(idx);
                }
            }
            PartitionKind::LabelSplit => {
                let (pos, neg) = split_binary_labels(data, workers)?;
                let half = workers / 2;
                for (i, idx) in pos.into_iter().enumerate() {
                    shards[i % half].push(idx);
                }
                for (i, idx) in neg.into_iter().enumerate() {
                    shards[half + i % half].push(idx);
                }
            }
        }
        for shard in &mut shards {
            shard.sort_unstable();
        }
        Ok(Self { kind, shards, n })
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    /// Number of workers.
    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    /// Instance count of the underlying dataset.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shard(&self, k: usize) -> &[usize] {
        &self.shards[k]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    /// Total number of assigned instances over all shards. Equals `n` for
    /// disjoint kinds and `workers * n` for replication; solvers normalize
    /// gradient sums by this.
    pub fn total_assigned(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }
}

fn split_binary_labels(
    data: &Dataset,
    workers: usize,
) -> Result<(Vec<usize>, Vec<usize>), PartitionError> {
    if workers % 2 != 0 {
        return Err(PartitionError::OddWorkers(workers));
    }
    if !data.labels_are_binary() {
        return Err(PartitionError::NonBinaryLabels);
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, inst) in data.instances().iter().enumerate() {
        if inst.label == 1.0 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    Ok((pos, neg))
}

/// Gradient correction `G_k(a)`: mean loss gradient over the full dataset
/// minus over shard `k`, evaluated at the anchor. The ridge contributions
/// cancel, so only loss terms appear. Zero when the shard mirrors the full
/// data (replication, or a single worker).
pub fn correction_vector(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    k: usize,
    a: &[f64],
) -> Vec<f64> {
    let full = grad_sum(model.loss, data, 0..data.n(), a);
    correction_from_full(model, data, part, k, a, &full)
}

/// Same as [`correction_vector`] but reuses a precomputed unnormalized
/// full-data gradient sum at the anchor.
pub fn correction_from_full(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    k: usize,
    a: &[f64],
    full_sum: &[f64],
) -> Vec<f64> {
    let shard = part.shard(k);
    let local = grad_sum(model.loss, data, shard.iter().copied(), a);
    let n = data.n() as f64;
    let m = shard.len().max(1) as f64;
    full_sum
        .iter()
        .zip(&local)
        .map(|(f, l)| f / n - l / m)
        .collect()
}

/// Value of worker `k`'s corrected local surrogate at `w`, anchored at `a`.
pub fn local_objective_value(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    k: usize,
    w: &[f64],
    a: &[f64],
) -> f64 {
    let corr = correction_vector(model, data, part, k, a);
    local_value_with_correction(model, data, part.shard(k), w, &corr)
}

fn local_value_with_correction(
    model: &Model,
    data: &Dataset,
    shard: &[usize],
    w: &[f64],
    corr: &[f64],
) -> f64 {
    let m = shard.len().max(1) as f64;
    let mean_loss = loss_sum(model.loss, data, shard.iter().copied(), w) / m;
    let corr_term: f64 = corr.iter().zip(w).map(|(c, wj)| c * wj).sum();
    mean_loss + 0.5 * model.lambda1 * norm_sq(w) + corr_term + model.lambda2 * l1_norm(w)
}

/// The local subproblem solver failed to reach the requested tolerance.
#[derive(Debug, Error)]
#[error("subproblem stalled at residual {residual:.3e} (tolerance {tol:.3e}) after {iters} iterations")]
pub struct SubproblemError {
    pub residual: f64,
    pub tol: f64,
    pub iters: usize,
}

const SUBPROBLEM_MAX_ITERS: usize = 500_000;

/// Minimizes worker `k`'s corrected local surrogate by proximal gradient
/// descent, warm-started at the anchor. Deterministic: a fixed step of one
/// over the shard's smoothness bound, run until the proximal fixed-point
/// residual (infinity norm of one step's movement) drops to `tol`.
pub fn solve_local_subproblem(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    k: usize,
    a: &[f64],
    tol: f64,
) -> Result<Vec<f64>, SubproblemError> {
    let corr = correction_vector(model, data, part, k, a);
    minimize_with_correction(model, data, part.shard(k), a, &corr, tol)
}

fn minimize_with_correction(
    model: &Model,
    data: &Dataset,
    shard: &[usize],
    a: &[f64],
    corr: &[f64],
    tol: f64,
) -> Result<Vec<f64>, SubproblemError> {
    let lip = smoothness_bound_over(model, data, shard.iter().copied()).max(1e-12);
    let eta = 1.0 / lip;
    let m = shard.len().max(1) as f64;
    let mut w = a.to_vec();
    let mut residual = f64::INFINITY;
    for it in 0..SUBPROBLEM_MAX_ITERS {
        let mut g = grad_sum(model.loss, data, shard.iter().copied(), &w);
        for j in 0..w.len() {
            g[j] = g[j] / m + model.lambda1 * w[j] + corr[j];
        }
        residual = 0.0;
        for j in 0..w.len() {
            let next = prox_l1(w[j] - eta * g[j], eta * model.lambda2);
            residual = residual.max((next - w[j]).abs());
            w[j] = next;
        }
        if residual <= tol {
            return Ok(w);
        }
        if !residual.is_finite() {
            return Err(SubproblemError { residual, tol, iters: it + 1 });
        }
    }
    Err(SubproblemError { residual, tol, iters: SUBPROBLEM_MAX_ITERS })
}

/// The local-global gap at one anchor, with the ingredients that go into it.
#[derive(Debug, Clone)]
pub struct GapReport {
    /// Euclidean norm of the anchor.
    pub anchor_norm: f64,
    /// Euclidean distance from the anchor to the supplied global optimum.
    pub anchor_dist: f64,
    /// Global optimal value minus the mean of the workers' local optima.
    pub gap: f64,
    /// Each worker's locally attained optimal value.
    pub local_optima: Vec<f64>,
    /// Objective value at the supplied global optimum.
    pub reference_value: f64,
}

impl GapReport {
    /// `gap / dist^2`, the quantity whose supremum defines partition
    /// incoherence. `None` when the anchor sits on the optimum.
    pub fn gamma_ratio(&self) -> Option<f64> {
        let d2 = self.anchor_dist * self.anchor_dist;
        (d2 > 0.0).then(|| self.gap / d2)
    }

    pub fn csv_header(workers: usize) -> String {
        let mut h = String::from("anchor_norm,gap");
        for k in 0..workers {
            h.push_str(&format!(",local_opt_{k}"));
        }
        h.push_str(",gamma_ratio");
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{}", self.anchor_norm, self.gap);
        for v in &self.local_optima {
            row.push_str(&format!(",{v}"));
        }
        match self.gamma_ratio() {
            Some(r) => row.push_str(&format!(",{r}")),
            None => row.push(','),
        }
        row
    }
}

/// Computes the local-global gap at anchor `a`: every worker solves its
/// corrected surrogate to `tol`, and the mean of those optima is compared
/// against the global optimal value `P(w_star)`.
pub fn local_global_gap(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    a: &[f64],
    w_star: &[f64],
    tol: f64,
) -> Result<GapReport, SubproblemError> {
    let full = grad_sum(model.loss, data, 0..data.n(), a);
    let reference_value = objective::objective_value(model, data, w_star);
    let mut local_optima = Vec::with_capacity(part.workers());
    for k in 0..part.workers() {
        let corr = correction_from_full(model, data, part, k, a, &full);
        let wk = minimize_with_correction(model, data, part.shard(k), a, &corr, tol)?;
        local_optima.push(local_value_with_correction(model, data, part.shard(k), &wk, &corr));
    }
    let mean_local: f64 = local_optima.iter().sum::<f64>() / part.workers() as f64;
    let dist_sq: f64 = a.iter().zip(w_star).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(GapReport {
        anchor_norm: norm_sq(a).sqrt(),
        anchor_dist: dist_sq.sqrt(),
        gap: reference_value - mean_local,
        local_optima,
        reference_value,
    })
}

/// Draws anchor points on random shells around `w_star`, with distances
/// uniform in `[sqrt(epsilon), radius]`. A fixed seed gives a fixed anchor
/// set, so different partitions can be compared on identical anchors.
pub fn sample_anchors(
    w_star: &[f64],
    epsilon: f64,
    radius: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let d = w_star.len();
    let lo = epsilon.max(0.0).sqrt();
    let hi = radius.max(lo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut dir: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
        let norm = norm_sq(&dir).sqrt();
        let dist = rng.random_range(lo..=hi);
        if norm > 0.0 {
            for v in &mut dir {
                *v *= dist / norm;
            }
        }
        anchors.push(dir.iter().zip(w_star).map(|(step, w)| w + step).collect());
    }
    anchors
}

/// Largest observed `gap / dist^2` over the anchors at squared distance at
/// least `epsilon` from the optimum. A sampled lower bound on the true
/// supremum.
pub fn gamma_from_anchors(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    anchors: &[Vec<f64>],
    epsilon: f64,
    w_star: &[f64],
    tol: f64,
) -> Result<f64, SubproblemError> {
    let mut best = 0.0f64;
    for a in anchors {
        let dist_sq: f64 = a.iter().zip(w_star).map(|(x, y)| (x - y) * (x - y)).sum();
        if dist_sq < epsilon || dist_sq == 0.0 {
            continue;
        }
        let report = local_global_gap(model, data, part, a, w_star, tol)?;
        best = best.max(report.gap / dist_sq);
    }
    Ok(best)
}

/// Monte-Carlo estimate of the partition-incoherence constant: the largest
/// `gap / dist^2` over `samples` anchors drawn around `w_star` at distances
/// in `[sqrt(epsilon), radius]`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gamma(
    model: &Model,
    data: &Dataset,
    part: &Partition,
    epsilon: f64,
    samples: usize,
    radius: f64,
    seed: u64,
    w_star: &[f64],
    tol: f64,
) -> Result<f64, SubproblemError> {
    let anchors = sample_anchors(w_star, epsilon, radius, samples, seed);
    gamma_from_anchors(model, data, part, &anchors, epsilon, w_star, tol)
}

/// Closed-form gap diagnostics for the scalar quadratic family where worker
/// `k` holds the smooth part `m_k/2 * w^2 + b_k * w` and the shared
/// regularizer is `|w|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticGap {
    /// Local-global gap at the requested anchor.
    pub gap: f64,
    /// Minimizer of the global objective.
    pub global_minimizer: f64,
    /// Coefficient `mean((mbar - m_k)^2 / m_k)` bounding the gap by
    /// `gamma_bound * (anchor - global_minimizer)^2`.
    pub gamma_bound: f64,
}

/// Evaluates the scalar quadratic family in closed form. Each worker's
/// corrected surrogate is `m_k/2 w^2 + t_k w + |w|` with
/// `t_k = (mbar - m_k) * anchor + bbar`, whose optimal value has an explicit
/// soft-threshold form; the same form with `mbar`, `bbar` gives the global
/// optimum. Requires every `m_k > 0`.
pub fn quadratic_gap_1d(m: &[f64], b: &[f64], anchor: f64) -> Result<QuadraticGap, PartitionError> {
    assert_eq!(m.len(), b.len(), "curvatures and offsets must pair up");
    if m.is_empty() {
        return Err(PartitionError::EmptyDataset);
    }
    for &mk in m {
        if mk.is_nan() || mk <= 0.0 {
            return Err(PartitionError::BadCurvature(mk));
        }
    }
    let p = m.len() as f64;
    let mbar = m.iter().sum::<f64>() / p;
    let bbar = b.iter().sum::<f64>() / p;

    // Optimal value of m/2 w^2 + t w + |w|: zero inside the dead zone,
    // otherwise -(|t| - 1)^2 / (2m).
    let opt_value = |mk: f64, t: f64| -> f64 {
        let excess = (t.abs() - 1.0).max(0.0);
        -excess * excess / (2.0 * mk)
    };
    let minimizer = |mk: f64, t: f64| -> f64 {
        if t > 1.0 {
            -(t - 1.0) / mk
        } else if t < -1.0 {
            -(t + 1.0) / mk
        } else {
            0.0
        }
    };

    let global_value = opt_value(mbar, bbar);
    let mut mean_local = 0.0;
    let mut gamma_bound = 0.0;
    for (&mk, _) in m.iter().zip(b) {
        let t = (mbar - mk) * anchor + bbar;
        mean_local += opt_value(mk, t);
        let dm = mbar - mk;
        gamma_bound += dm * dm / mk;
    }
    mean_local /= p;
    gamma_bound /= p;

    Ok(QuadraticGap {
        gap: global_value - mean_local,
        global_minimizer: minimizer(mbar, bbar),
        gamma_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_libsvm;
    use crate::objective::{objective_value, Loss};
    use rand_chacha::ChaCha8Rng;

    fn binary_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut text = String::new();
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            text.push_str(&format!("{y}"));
            for j in 0..d {
                if rng.random_bool(0.6) {
                    // Correlate features with the label so shards differ.
                    let v: f64 = rng.random_range(0.1..1.0) * (y + 0.3);
                    if v != 0.0 {
                        text.push_str(&format!(" {}:{}", j + 1, v));
                    }
                }
            }
            text.push('\n');
        }
        parse_libsvm(&text, d).unwrap()
    }

    #[test]
    fn uniform_shards_cover_and_balance() {
        let ds = binary_dataset(103, 4, 0);
        let part = Partition::make(&ds, PartitionKind::Uniform, 4, 9).unwrap();
        assert_eq!(part.workers(), 4);
        let mut all: Vec<usize> = part.shards().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        let sizes: Vec<usize> = part.shards().iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn single_worker_gets_everything() {
        let ds = binary_dataset(10, 3, 0);
        let part = Partition::make(&ds, PartitionKind::Uniform, 1, 0).unwrap();
        assert_eq!(part.shard(0), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn replicate_gives_full_copies() {
        let ds = binary_dataset(12, 3, 0);
        let part = Partition::make(&ds, PartitionKind::Replicate, 3, 0).unwrap();
        for k in 0..3 {
            assert_eq!(part.shard(k), (0..12).collect::<Vec<_>>());
        }
        assert_eq!(part.total_assigned(), 36);
    }

    #[test]
    fn label_split_separates_classes() {
        let ds = binary_dataset(40, 3, 1);
        let part = Partition::make(&ds, PartitionKind::LabelSplit, 4, 0).unwrap();
        for k in 0..2 {
            for &i in part.shard(k) {
                assert_eq!(ds.instances()[i].label, 1.0);
            }
        }
        for k in 2..4 {
            for &i in part.shard(k) {
                assert_eq!(ds.instances()[i].label, -1.0);
            }
        }
    }

    #[test]
    fn label_skew_routes_the_requested_fractions() {
        let ds = binary_dataset(200, 3, 2); // 100 positive, 100 negative
        let part = Partition::make(&ds, PartitionKind::LabelSkewed(0.75), 4, 5).unwrap();
        let first_pos: usize = (0..2)
            .flat_map(|k| part.shard(k))
            .filter(|&&i| ds.instances()[i].label == 1.0)
            .count();
        let first_neg: usize = (0..2)
            .flat_map(|k| part.shard(k))
            .filter(|&&i| ds.instances()[i].label == -1.0)
            .count();
        assert_eq!(first_pos, 75);
        assert_eq!(first_neg, 25);
        // Balanced input labels keep shard sizes balanced too.
        let sizes: Vec<usize> = part.shards().iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
    }

    #[test]
    fn partition_is_seed_deterministic() {
        let ds = binary_dataset(60, 3, 3);
        let a = Partition::make(&ds, PartitionKind::Uniform, 4, 11).unwrap();
        let b = Partition::make(&ds, PartitionKind::Uniform, 4, 11).unwrap();
        let c = Partition::make(&ds, PartitionKind::Uniform, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn label_kinds_reject_bad_inputs() {
        let binary = binary_dataset(20, 3, 4);
        assert!(matches!(
            Partition::make(&binary, PartitionKind::LabelSplit, 3, 0),
            Err(PartitionError::OddWorkers(3))
        ));
        assert!(matches!(
            Partition::make(&binary, PartitionKind::LabelSkewed(1.5), 4, 0),
            Err(PartitionError::BadFraction(_))
        ));
        let regression = parse_libsvm("0.5 1:1\n2.5 1:2\n", 0).unwrap();
        assert!(matches!(
            Partition::make(&regression, PartitionKind::LabelSplit, 2, 0),
            Err(PartitionError::NonBinaryLabels)
        ));
        assert!(matches!(
            Partition::make(&regression, PartitionKind::Uniform, 0, 0),
            Err(PartitionError::NoWorkers)
        ));
    }

    #[test]
    fn kind_strings_round_trip() {
        for s in ["uniform", "skew:0.75", "labelsplit", "replicate"] {
            let kind: PartitionKind = s.parse().unwrap();
            assert_eq!(kind.to_string(), s);
        }
        assert!("striped".parse::<PartitionKind>().is_err());
        assert!("skew:abc".parse::<PartitionKind>().is_err());
    }

    #[test]
    fn correction_vanishes_when_shards_mirror_the_data() {
        let ds = binary_dataset(30, 5, 5);
        let model = Model::new(Loss::Logistic, 0.1, 0.05).unwrap();
        let a = vec![0.2; 5];
        let rep = Partition::make(&ds, PartitionKind::Replicate, 3, 0).unwrap();
        for k in 0..3 {
            let g = correction_vector(&model, &ds, &rep, k, &a);
            assert!(g.iter().all(|&v| v == 0.0), "replicated shard correction {g:?}");
        }
        let single = Partition::make(&ds, PartitionKind::Uniform, 1, 0).unwrap();
        let g = correction_vector(&model, &ds, &single, 0, &a);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corrections_of_equal_halves_cancel() {
        let ds = binary_dataset(40, 5, 6);
        let model = Model::new(Loss::Squared, 0.0, 0.1).unwrap();
        let a: Vec<f64> = (0..5).map(|j| 0.1 * j as f64 - 0.2).collect();
        let part = Partition::make(&ds, PartitionKind::Uniform, 2, 3).unwrap();
        let g0 = correction_vector(&model, &ds, &part, 0, &a);
        let g1 = correction_vector(&model, &ds, &part, 1, &a);
        for (x, y) in g0.iter().zip(&g1) {
            assert!((x + y).abs() <= 1e-12, "corrections must cancel: {x} vs {y}");
        }
    }

    #[test]
    fn shard_gradient_sums_decompose_the_full_gradient() {
        let ds = binary_dataset(50, 6, 7);
        let model = Model::new(Loss::Logistic, 0.0, 0.0).unwrap();
        let w: Vec<f64> = (0..6).map(|j| 0.05 * j as f64).collect();
        let part = Partition::make(&ds, PartitionKind::Uniform, 5, 1).unwrap();
        let full = grad_sum(model.loss, &ds, 0..50, &w);
        let mut combined = vec![0.0; 6];
        for k in 0..5 {
            let local = grad_sum(model.loss, &ds, part.shard(k).iter().copied(), &w);
            for (c, l) in combined.iter_mut().zip(&local) {
                *c += l;
            }
        }
        for (f, c) in full.iter().zip(&combined) {
            let scale = f.abs().max(1.0);
            assert!((f - c).abs() / scale <= 1e-10, "decomposition: {f} vs {c}");
        }
    }

    #[test]
    fn local_value_on_replication_equals_global() {
        let ds = binary_dataset(24, 4, 8);
        let model = Model::new(Loss::Logistic, 0.2, 0.3).unwrap();
        let part = Partition::make(&ds, PartitionKind::Replicate, 2, 0).unwrap();
        let w = vec![0.1, -0.4, 0.0, 0.7];
        let a = vec![0.5; 4];
        let local = local_objective_value(&model, &ds, &part, 0, &w, &a);
        let global = objective_value(&model, &ds, &w);
        assert_eq!(local, global, "corrections are exactly zero on replicas");
    }

    #[test]
    fn mean_of_local_values_matches_global_on_equal_shards() {
        let ds = binary_dataset(40, 5, 9);
        let model = Model::new(Loss::Squared, 0.05, 0.2).unwrap();
        let part = Partition::make(&ds, PartitionKind::Uniform, 4, 2).unwrap();
        let w: Vec<f64> = (0..5).map(|j| 0.3 - 0.1 * j as f64).collect();
        let a: Vec<f64> = (0..5).map(|j| 0.1 * j as f64).collect();
        let mean: f64 = (0..4)
            .map(|k| local_objective_value(&model, &ds, &part, k, &w, &a))
            .sum::<f64>()
            / 4.0;
        let global = objective_value(&model, &ds, &w);
        assert!((mean - global).abs() <= 1e-12, "{mean} vs {global}");
    }

    #[test]
    fn hand_computed_two_instance_correction() {
        // Two instances, squared loss, one worker each. At a = [0]:
        // h'(0; y) = -y, so shard gradients are -y_k * x_k.
        let ds = parse_libsvm("2 1:1\n-4 1:3\n", 0).unwrap();
        let model = Model::new(Loss::Squared, 0.7, 0.1).unwrap();
        let part = Partition {
            kind: PartitionKind::Uniform,
            shards: vec![vec![0], vec![1]],
            n: 2,
        };
        // Full mean: ((-2 * 1) + (4 * 3)) / 2 = 5.
        let g0 = correction_vector(&model, &ds, &part, 0, &[0.0]);
        let g1 = correction_vector(&model, &ds, &part, 1, &[0.0]);
        assert_eq!(g0, vec![5.0 - (-2.0)]); // 7
        assert_eq!(g1, vec![5.0 - 12.0]); // -7
    }

    #[test]
    fn subproblem_on_replication_recovers_the_global_optimum() {
        let ds = binary_dataset(30, 4, 10);
        let model = Model::new(Loss::Logistic, 0.5, 0.02).unwrap();
        let part = Partition::make(&ds, PartitionKind::Replicate, 2, 0).unwrap();
        let a = vec![0.3, -0.3, 0.3, -0.3];
        let w0 = solve_local_subproblem(&model, &ds, &part, 0, &a, 1e-10).unwrap();
        // Solve the same thing from a different warm start: strong convexity
        // means both runs land on the same point.
        let far = vec![-1.0, 1.0, -1.0, 1.0];
        let w1 = solve_local_subproblem(&model, &ds, &part, 1, &far, 1e-10).unwrap();
        for (x, y) in w0.iter().zip(&w1) {
            assert!((x - y).abs() <= 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn subproblem_matches_a_small_step_oracle() {
        let ds = binary_dataset(16, 3, 11);
        let model = Model::new(Loss::Squared, 0.1, 0.05).unwrap();
        let part = Partition::make(&ds, PartitionKind::Uniform, 2, 4).unwrap();
        let a = vec![0.2, -0.1, 0.4];
        let fast = solve_local_subproblem(&model, &ds, &part, 1, &a, 1e-11).unwrap();

        // Independent slow route: tiny fixed step, many iterations.
        let corr = correction_vector(&model, &ds, &part, 1, &a);
        let shard = part.shard(1);
        let m = shard.len() as f64;
        let lip = smoothness_bound_over(&model, &ds, shard.iter().copied());
        let eta = 0.1 / lip;
        let mut w = vec![0.0; 3];
        for _ in 0..200_000 {
            let mut g = grad_sum(model.loss, &ds, shard.iter().copied(), &w);
            for j in 0..3 {
                g[j] = g[j] / m + model.lambda1 * w[j] + corr[j];
                w[j] = prox_l1(w[j] - eta * g[j], eta * model.lambda2);
            }
        }
        for (x, y) in fast.iter().zip(&w) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn overwhelming_l1_drives_the_subproblem_to_zero() {
        let ds = binary_dataset(20, 3, 12);
        let model = Model::new(Loss::Logistic, 0.0, 50.0).unwrap();
        let part = Partition::make(&ds, PartitionKind::Uniform, 2, 0).unwrap();
        let w = solve_local_subproblem(&model, &ds, &part, 0, &[0.4, 0.4, 0.4], 1e-12).unwrap();
        assert_eq!(w, vec![0.0; 3]);
    }

    /// Reference optimum for small fixtures: deterministic proximal descent
    /// on the full objective.
    fn global_optimum(model: &Model, ds: &Dataset, tol: f64) -> Vec<f64> {
        let single = Partition::make(ds, PartitionKind::Uniform, 1, 0).unwrap();
        solve_local_subproblem(model, ds, &single, 0, &vec![0.0; ds.dim()], tol).unwrap()
    }

    #[test]
    fn gap_is_nonnegative_and_vanishes_at_the_optimum() {
        let ds = binary_dataset(36, 4, 13);
        let model = Model::new(Loss::Logistic, 0.3, 0.02).unwrap();
        let tol = 1e-10;
        let w_star = global_optimum(&model, &ds, tol);
        for kind in [PartitionKind::Uniform, PartitionKind::LabelSplit] {
            let part = Partition::make(&ds, kind, 4, 3).unwrap();
            let at_opt = local_global_gap(&model, &ds, &part, &w_star, &w_star, tol).unwrap();
            assert!(at_opt.gap.abs() <= 1e-8, "{kind}: gap at optimum {}", at_opt.gap);
            let away: Vec<f64> = w_star.iter().map(|v| v + 0.5).collect();
            let rep = local_global_gap(&model, &ds, &part, &away, &w_star, tol).unwrap();
            assert!(rep.gap >= -1e-8, "{kind}: gap must be nonnegative, got {}", rep.gap);
        }
    }

    #[test]
    fn replication_has_zero_gap_everywhere() {
        let ds = binary_dataset(30, 4, 14);
        let model = Model::new(Loss::Squared, 0.2, 0.05).unwrap();
        let tol = 1e-10;
        let w_star = global_optimum(&model, &ds, tol);
        let part = Partition::make(&ds, PartitionKind::Replicate, 3, 0).unwrap();
        for shift in [0.3, -1.0, 2.0] {
            let a: Vec<f64> = w_star.iter().map(|v| v + shift).collect();
            let rep = local_global_gap(&model, &ds, &part, &a, &w_star, tol).unwrap();
            assert!(rep.gap.abs() <= 1e-8, "gap {} at shift {shift}", rep.gap);
        }
    }

    #[test]
    fn label_split_opens_a_real_gap() {
        let ds = binary_dataset(40, 4, 15);
        let model = Model::new(Loss::Logistic, 0.3, 0.02).unwrap();
        let tol = 1e-10;
        let w_star = global_optimum(&model, &ds, tol);
        let part = Partition::make(&ds, PartitionKind::LabelSplit, 2, 0).unwrap();
        let a: Vec<f64> = w_star.iter().map(|v| v + 1.0).collect();
        let rep = local_global_gap(&model, &ds, &part, &a, &w_star, tol).unwrap();
        assert!(rep.gap > 1e-7, "expected a visible gap, got {}", rep.gap);
    }

    #[test]
    fn gamma_orders_partitions_and_shrinks_with_epsilon() {
        let ds = binary_dataset(36, 4, 16);
        let model = Model::new(Loss::Logistic, 0.3, 0.02).unwrap();
        let tol = 1e-10;
        let w_star = global_optimum(&model, &ds, tol);
        let radius = 3.0;
        let anchors = sample_anchors(&w_star, 1e-4, radius, 24, 77);

        let rep = Partition::make(&ds, PartitionKind::Replicate, 4, 0).unwrap();
        let uni = Partition::make(&ds, PartitionKind::Uniform, 4, 3).unwrap();
        let split = Partition::make(&ds, PartitionKind::LabelSplit, 4, 0).unwrap();
        let g_rep = gamma_from_anchors(&model, &ds, &rep, &anchors, 1e-4, &w_star, tol).unwrap();
        let g_uni = gamma_from_anchors(&model, &ds, &uni, &anchors, 1e-4, &w_star, tol).unwrap();
        let g_split =
            gamma_from_anchors(&model, &ds, &split, &anchors, 1e-4, &w_star, tol).unwrap();
        assert!(g_rep <= 1e-7, "replication incoherence {g_rep}");
        assert!(g_uni <= g_split, "uniform {g_uni} vs labelsplit {g_split}");

        // Growing epsilon only discards anchors, so the estimate cannot rise.
        let mut prev = f64::INFINITY;
        for eps in [1e-4, 0.5, 2.0] {
            let g =
                gamma_from_anchors(&model, &ds, &split, &anchors, eps, &w_star, tol).unwrap();
            assert!(g <= prev + 1e-15, "epsilon {eps}: {g} > {prev}");
            prev = g;
        }
    }

    #[test]
    fn quadratic_family_hand_values() {
        // Single worker: the surrogate is the global problem.
        let q = quadratic_gap_1d(&[2.0], &[3.0], 1.7).unwrap();
        assert_eq!(q.gap, 0.0);
        assert_eq!(q.gamma_bound, 0.0);
        assert!((q.global_minimizer - (-1.0)).abs() < 1e-15);

        // The classic two-worker example: curvatures 1 and 3.
        let q = quadratic_gap_1d(&[1.0, 3.0], &[0.0, 0.0], 0.0).unwrap();
        assert!((q.gamma_bound - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(q.gap, 0.0); // anchored at the optimum
        assert_eq!(q.global_minimizer, 0.0);

        // Anchor far away: workers see tilted problems and undershoot.
        let q = quadratic_gap_1d(&[1.0, 3.0], &[0.0, 0.0], 3.0).unwrap();
        // t = [3, -3]: local optima -(3-1)^2/2 and -(3-1)^2/6.
        let expect = 0.0 - 0.5 * (-4.0 / 2.0 - 4.0 / 6.0);
        assert!((q.gap - expect).abs() < 1e-15, "{} vs {expect}", q.gap);

        assert!(matches!(
            quadratic_gap_1d(&[1.0, -0.5], &[0.0, 0.0], 0.0),
            Err(PartitionError::BadCurvature(_))
        ));
    }

    #[test]
    fn quadratic_gap_respects_its_own_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let p = rng.random_range(1..6);
            let m: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..8.0)).collect();
            let b: Vec<f64> = (0..p).map(|_| rng.random_range(-4.0..4.0)).collect();
            let a = rng.random_range(-5.0..5.0);
            let q = quadratic_gap_1d(&m, &b, a).unwrap();
            let dist = a - q.global_minimizer;
            assert!(
                q.gap <= q.gamma_bound * dist * dist + 1e-12,
                "m={m:?} b={b:?} a={a}: gap {} bound {}",
                q.gap,
                q.gamma_bound * dist * dist
            );
            assert!(q.gap >= -1e-12);
        }
    }
}
