use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use fbm_averaging_bench::{coupled_setup, unit_path};
use fbm_averaging_core::fixed_point::{pullback_value, FrozenFastSpec};
use fbm_averaging_core::integral::{young_sum_integral, zahle_integral, FracParams, OperatorPath};
use fbm_averaging_core::noise::{sample_fbm_1d, UniformGrid};
use fbm_averaging_core::solver::{solve_coupled, SolverConfig};
use fbm_averaging_core::spectral::SpectralVector;

fn bench_fbm_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("fbm_sampling");
    for n in [1024usize, 4096, 16384] {
        let grid = UniformGrid::one_sided(1.0 / n as f64, n).unwrap();
        group.bench_function(format!("circulant_n{n}"), |b| {
            let mut seed = 0u64;
            b.iter(|| {
                seed = seed.wrapping_add(1);
                black_box(sample_fbm_1d(0.75, &grid, seed).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_pathwise_integral(c: &mut Criterion) {
    let mut group = c.benchmark_group("pathwise_integral");
    group.sample_size(10);
    let n = 512;
    let path = unit_path(n, 0.75, 3);
    let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let psi = OperatorPath::diagonal_from_fn(times, 2, |_, t| 1.0 + 0.5 * (3.0 * t).sin()).unwrap();
    let p = FracParams::new(0.425, 0.7, 0.55).unwrap();
    group.bench_function("zahle_n512", |b| {
        b.iter(|| black_box(zahle_integral(&psi, &path, &p, 0.0, 1.0).unwrap()))
    });
    group.bench_function("young_sum_n512", |b| {
        b.iter(|| black_box(young_sum_integral(&psi, &path, 0.0, 1.0).unwrap()))
    });
    group.finish();
}

fn bench_coupled_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupled_solve");
    group.sample_size(20);
    let (spec, omega1, omega2) = coupled_setup(0.05, 1.0, 9);
    let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
    let x0 = SpectralVector::from_vec(vec![0.5, -0.25, 0.125, 0.0]);
    let y0 = SpectralVector::from_vec(vec![0.25, 0.0, -0.125, 0.1]);
    group.bench_function("benchmark_eps005_t1", |b| {
        b.iter(|| black_box(solve_coupled(&spec, &omega1, &omega2, &x0, &y0, 1.0, &cfg).unwrap()))
    });
    group.finish();
}

fn bench_pullback(c: &mut Criterion) {
    let mut group = c.benchmark_group("pullback_fixed_point");
    group.sample_size(20);
    let (spec, _omega1, omega2) = coupled_setup(0.05, 1.0, 11);
    let frozen = FrozenFastSpec::new(spec, SpectralVector::zeros(4)).unwrap();
    group.bench_function("benchmark_eps005", |b| {
        b.iter_batched(
            || omega2.clone(),
            |path| black_box(pullback_value(&frozen, &path, 0.0, 1e-7).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_fbm_sampling, bench_pathwise_integral, bench_coupled_solve, bench_pullback);
criterion_main!(benches);
