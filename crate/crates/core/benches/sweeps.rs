//! Parallel vs sequential probe sweeps: batches of independent forward solves
//! and Frechet-style perturbed solves on a small grid.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tumorctl::config::ExperimentConfig;
use tumorctl::control::{control_to_state, ControlSetup};
use tumorctl::par;
use tumorctl::verify::SmoothControl;

fn setup(n_grid: usize) -> ControlSetup {
    let mut cfg = ExperimentConfig::default();
    cfg.domain.n_grid = n_grid;
    cfg.time.n_steps = 100;
    cfg.build().unwrap().setup
}

fn controls(setup: &ControlSetup, count: usize) -> Vec<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..count)
        .map(|_| SmoothControl::random(&mut rng, 4, 1.0).sample(setup.grid(), &setup.time))
        .collect()
}

fn phi_sum(setup: &ControlSetup, u: Vec<DVector<f64>>) -> f64 {
    control_to_state(setup, &u).unwrap().phi.last().unwrap().sum()
}

fn forward_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_batch");
    group.sample_size(10);
    for n_grid in [16, 32] {
        let s = setup(n_grid);
        let batch = controls(&s, 16);
        group.bench_with_input(BenchmarkId::new("parallel", n_grid), &batch, |b, batch| {
            b.iter(|| par::map(batch.clone(), |u| phi_sum(&s, u)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n_grid), &batch, |b, batch| {
            b.iter(|| par::map_sequential(batch.clone(), |u| phi_sum(&s, u)))
        });
    }
    group.finish();
}

fn eps_sweep(c: &mut Criterion) {
    let s = setup(24);
    let base = controls(&s, 2);
    let (u, h) = (&base[0], &base[1]);
    let perturbed = |eps: f64| -> Vec<DVector<f64>> { u.iter().zip(h).map(|(u, h)| u + h * eps).collect() };
    let eps: Vec<f64> = (1..=8).map(|i| 10f64.powi(-i)).collect();
    let mut group = c.benchmark_group("eps_sweep");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| par::map(eps.clone(), |e| phi_sum(&s, perturbed(e))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_sequential(eps.clone(), |e| phi_sum(&s, perturbed(e))))
    });
    group.finish();
}

criterion_group!(benches, forward_batch, eps_sweep);
criterion_main!(benches);
