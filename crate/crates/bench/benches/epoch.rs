//! Inner-epoch throughput: dense coordinate updates versus deferred updates
//! with closed-form recovery, across feature densities. The deferred path
//! should win by roughly the inverse density once supports are sparse.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pscope_core::objective::{grad_sum, Loss, Model};
use pscope_core::solver::{default_eta, draw_epoch_samples, worker_epoch};
use pscope_core::synth::{regression, SynthSpec};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_epoch(c: &mut Criterion) {
    let n = 500;
    let d = 2000;
    let steps = 200;
    let mut group = c.benchmark_group("worker_epoch");
    for &density in &[0.001, 0.01, 0.1] {
        let spec = SynthSpec { n, d, density, noise: 0.1, seed: 42 };
        let (data, _) = regression(&spec);
        let model = Model::new(Loss::Squared, 1e-3, 1e-3).expect("valid model");
        let eta = default_eta(&model, &data);
        let shard: Vec<usize> = (0..n).collect();
        let anchor = vec![0.05; d];
        let z: Vec<f64> = grad_sum(model.loss, &data, shard.iter().copied(), &anchor)
            .into_iter()
            .map(|g| g / n as f64)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = draw_epoch_samples(&mut rng, steps, n);
        for (label, lazy) in [("dense", false), ("lazy", true)] {
            group.bench_with_input(
                BenchmarkId::new(label, density),
                &lazy,
                |b, &lazy| {
                    b.iter(|| {
                        worker_epoch(
                            black_box(&model),
                            black_box(&data),
                            &shard,
                            &anchor,
                            &z,
                            eta,
                            lazy,
                            &samples,
                        )
                    })
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_epoch);
criterion_main!(benches);
