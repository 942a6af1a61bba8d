//! Deterministic synthetic problem generators.
//!
//! Used by the CLI's `synth` subcommand, the integration tests, and the
//! benchmarks. Everything is a pure function of the spec, so the same spec
//! always yields the same dataset on every platform.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Instance, SparseVector};
use crate::rngutil::standard_normal;

/// Shape of a synthetic problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Instance count.
    pub n: usize,
    /// Feature dimension.
    pub d: usize,
    /// Probability that any given coordinate of an instance is nonzero.
    /// Rows that come out empty get one forced coordinate.
    pub density: f64,
    /// Standard deviation of the additive noise on the linear response.
    pub noise: f64,
    /// Generator seed.
    pub seed: u64,
}

fn nonzero_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = standard_normal(rng);
        if v != 0.0 {
            return v;
        }
    }
}

/// Sparse ground-truth weights: roughly one in ten coordinates carries a
/// signed weight with magnitude in `[0.5, 2]`.
fn true_weights(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nonzeros = (d / 10).max(1);
    let mut w = vec![0.0; d];
    let mut picked = 0;
    while picked < nonzeros {
        let j = rng.random_range(0..d);
        if w[j] == 0.0 {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            w[j] = sign * rng.random_range(0.5..2.0);
            picked += 1;
        }
    }
    w
}

fn features(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<SparseVector> {
    (0..spec.n)
        .map(|i| {
            let mut indices = Vec::new();
            let mut values = Vec::new();
            for j in 0..spec.d {
                if rng.random::<f64>() < spec.density {
                    indices.push(j);
                    values.push(nonzero_normal(rng));
                }
            }
            if indices.is_empty() {
                indices.push(i % spec.d);
                values.push(nonzero_normal(rng));
            }
            SparseVector::new(indices, values).expect("generator emits valid vectors")
        })
        .collect()
}

/// Generates a regression problem: `y = x . w_true + noise`. Returns the
/// dataset and the ground-truth weights.
pub fn regression(spec: &SynthSpec) -> (Dataset, Vec<f64>) {
    assert!(spec.n > 0 && spec.d > 0, "need at least one instance and feature");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w_true = true_weights(spec.d, &mut rng);
    let xs = features(spec, &mut rng);
    let instances = xs
        .into_iter()
        .map(|x| {
            let y = x.dot(&w_true) + spec.noise * standard_normal(&mut rng);
            Instance { features: x, label: y }
        })
        .collect();
    let data = Dataset::from_instances(instances, spec.d).expect("generator emits valid data");
    (data, w_true)
}

/// Generates a binary classification problem with labels in `{-1, +1}`,
/// split exactly in half: instances whose noisy linear response falls in
/// the upper half get `+1`. The exact balance keeps label-based partitions
/// evenly sized.
pub fn classification(spec: &SynthSpec) -> (Dataset, Vec<f64>) {
    assert!(spec.n > 0 && spec.d > 0, "need at least one instance and feature");
    assert!(spec.n % 2 == 0, "balanced labels need an even instance count");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w_true = true_weights(spec.d, &mut rng);
    let xs = features(spec, &mut rng);
    let scores: Vec<f64> = xs
        .iter()
        .map(|x| x.dot(&w_true) + spec.noise * standard_normal(&mut rng))
        .collect();
    let mut order: Vec<usize> = (0..spec.n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut labels = vec![-1.0; spec.n];
    for &i in &order[spec.n / 2..] {
        labels[i] = 1.0;
    }
    let instances = xs
        .into_iter()
        .zip(labels)
        .map(|(x, y)| Instance { features: x, label: y })
        .collect();
    let data = Dataset::from_instances(instances, spec.d).expect("generator emits valid data");
    (data, w_true)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: SynthSpec = SynthSpec { n: 100, d: 40, density: 0.2, noise: 0.1, seed: 5 };

    #[test]
    fn same_spec_same_data() {
        let (a, wa) = regression(&SPEC);
        let (b, wb) = regression(&SPEC);
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        let (c, _) = regression(&SynthSpec { seed: 6, ..SPEC });
        assert_ne!(a, c);
    }

    #[test]
    fn classification_is_exactly_balanced() {
        let (data, _) = classification(&SPEC);
        let pos = data.instances().iter().filter(|i| i.label == 1.0).count();
        assert_eq!(pos, SPEC.n / 2);
        assert!(data.labels_are_binary());
    }

    #[test]
    fn labels_track_the_ground_truth() {
        // Median thresholding guarantees every positive instance scores at
        // least as high as every negative one (no noise, so scores are the
        // pure linear responses).
        let (data, w) = classification(&SynthSpec { noise: 0.0, ..SPEC });
        let score = |inst: &Instance| inst.features.dot(&w);
        let min_pos = data
            .instances()
            .iter()
            .filter(|i| i.label == 1.0)
            .map(score)
            .fold(f64::INFINITY, f64::min);
        let max_neg = data
            .instances()
            .iter()
            .filter(|i| i.label == -1.0)
            .map(score)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(min_pos >= max_neg, "label split out of order: {min_pos} < {max_neg}");
        assert!(min_pos > f64::NEG_INFINITY && max_neg < f64::INFINITY);
    }

    #[test]
    fn density_and_dimension_hold() {
        let (data, w) = regression(&SPEC);
        assert_eq!(data.n(), SPEC.n);
        assert_eq!(data.dim(), SPEC.d);
        assert_eq!(w.len(), SPEC.d);
        let nnz: usize = data.instances().iter().map(|i| i.features.nnz()).sum();
        let expected = (SPEC.n * SPEC.d) as f64 * SPEC.density;
        assert!((nnz as f64) > 0.5 * expected && (nnz as f64) < 2.0 * expected);
        assert!(data.instances().iter().all(|i| i.features.nnz() >= 1));
    }
}
