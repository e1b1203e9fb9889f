//! Benchmark-only crate; see `benches/kernels.rs`. Shared setup helpers for
//! the hot kernels live here so the bench target stays declarative.

use fbm_averaging_core::noise::{
    sample_trace_class_fbm, CovarianceConvention, CovarianceSpectrum, FbmPath, UniformGrid,
};
use fbm_averaging_core::solver::SystemSpec;

/// One-sided unit-interval path with `n` cells for integral benchmarks.
pub fn unit_path(n: usize, hurst: f64, seed: u64) -> FbmPath {
    let grid = UniformGrid::one_sided(1.0 / n as f64, n).unwrap();
    let q = CovarianceSpectrum::new(vec![1.0, 0.25]).unwrap();
    sample_trace_class_fbm(&q, hurst, &grid, seed, CovarianceConvention::Standard).unwrap()
}

/// Benchmark system plus a matched driving pair for the coupled solver.
pub fn coupled_setup(eps: f64, t_end: f64, seed: u64) -> (SystemSpec, FbmPath, FbmPath) {
    use fbm_averaging_core::solver::{fast_grid_step, sample_experiment_paths};
    let spec = SystemSpec::benchmark(eps).unwrap();
    let dt = 1.0 / 256.0;
    let tau = fast_grid_step(dt, &[eps], 0.005).unwrap();
    let (omega1, omega2) = sample_experiment_paths(&spec, seed, t_end, dt, tau, eps, 15.0).unwrap();
    (spec, omega1, omega2)
}
