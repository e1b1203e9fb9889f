//! Exact sampling of trace-class V-valued fractional Brownian motion on
//! uniform grids, one-sided or two-sided, together with the path-space shift
//! operators and the time scaling used by the fast dynamics.
//!
//! One-sided and two-sided paths are both built from a single stationary
//! fractional-Gaussian-noise stream over the whole index lattice and summed
//! outward from the anchor B(0) = 0. Because fBm restricted to a lattice is
//! exactly the partial-sum process of fGn (stationary increments plus the
//! variance function determine the joint law), this reproduces the two-sided
//! covariance including cross-sign pairs — no independent-halves gluing.
//! The fGn stream itself comes from circulant embedding (Davies-Harte), with
//! a dense Cholesky fallback when the embedding fails to be nonnegative
//! definite (short grids with H near 1).

use ndarray::{Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::spectral::SpectralVector;
use crate::util::{linear_fit, standard_normal_vec, substream};

/// Hurst exponents of the slow and fast noises. The admissible window is
/// `H1 > 1/2` (Young integration against the slow noise) and `H2 > 1 - H1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HurstPair {
    h1: f64,
    h2: f64,
}

impl HurstPair {
    pub fn new(h1: f64, h2: f64) -> Result<Self> {
        if !(h1 > 0.5 && h1 < 1.0) {
            return Err(Error::invalid(format!("H1 must lie in (1/2, 1), got {h1}")));
        }
        if !(h2 > 1.0 - h1 && h2 < 1.0) {
            return Err(Error::invalid(format!("H2 must lie in (1 - H1, 1) = ({}, 1), got {h2}", 1.0 - h1)));
        }
        Ok(HurstPair { h1, h2 })
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }
}

/// Diagonal covariance spectrum `q_ii^2` of the driving noise.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpectrum {
    q_sq: Vec<f64>,
}

impl CovarianceSpectrum {
    pub fn new(q_sq: Vec<f64>) -> Result<Self> {
        if q_sq.is_empty() {
            return Err(Error::invalid("covariance spectrum must be nonempty"));
        }
        for (i, q) in q_sq.iter().enumerate() {
            if !(q.is_finite() && *q >= 0.0) {
                return Err(Error::invalid(format!("q_sq[{i}] = {q} must be >= 0")));
            }
        }
        Ok(CovarianceSpectrum { q_sq })
    }

    /// `q_ii^2 = scale / i^2`, a simple trace-class profile.
    pub fn inverse_square(dim: usize, scale: f64) -> Self {
        CovarianceSpectrum { q_sq: (1..=dim).map(|i| scale / (i * i) as f64).collect() }
    }

    pub fn dim(&self) -> usize {
        self.q_sq.len()
    }

    pub fn q_sq(&self) -> &[f64] {
        &self.q_sq
    }

    pub fn trace(&self) -> f64 {
        self.q_sq.iter().sum()
    }
}

/// Variance normalization of a unit-spectrum mode.
///
/// `Standard` gives Var B(t) = t^{2H} (the convention every sampling
/// algorithm's reference formulas use). `Doubled` reproduces the covariance
/// with no 1/2 factor in front of `|t|^{2H} + |s|^{2H} - |t-s|^{2H}`, i.e.
/// Var B(t) = 2 t^{2H}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CovarianceConvention {
    #[default]
    Standard,
    Doubled,
}

impl CovarianceConvention {
    fn amplitude(self) -> f64 {
        match self {
            CovarianceConvention::Standard => 1.0,
            CovarianceConvention::Doubled => std::f64::consts::SQRT_2,
        }
    }
}

/// Uniform sampling grid containing 0: points `(-n_neg..=n_pos) * dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformGrid {
    pub dt: f64,
    pub n_neg: usize,
    pub n_pos: usize,
}

impl UniformGrid {
    pub fn one_sided(dt: f64, n: usize) -> Result<Self> {
        UniformGrid::two_sided(dt, 0, n)
    }

    pub fn two_sided(dt: f64, n_neg: usize, n_pos: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("grid step must be positive, got {dt}")));
        }
        if n_neg + n_pos == 0 {
            return Err(Error::invalid("grid must have at least one increment"));
        }
        Ok(UniformGrid { dt, n_neg, n_pos })
    }

    pub fn n_points(&self) -> usize {
        self.n_neg + self.n_pos + 1
    }
}

/// A sampled multi-mode fractional Brownian path on a uniform grid, exactly
/// zero at t = 0 in every mode. Row `m` of `modes` is mode `m`; column `i`
/// belongs to time `(i - zero_index) * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct FbmPath {
    dt: f64,
    zero_index: usize,
    modes: Array2<f64>,
    hurst: f64,
    seed: u64,
}

impl FbmPath {
    pub fn n_modes(&self) -> usize {
        self.modes.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.zero_index as f64) * self.dt
    }

    pub fn t_min(&self) -> f64 {
        self.time(0)
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.n_points() - 1)
    }

    /// Index of a grid-aligned time; hard error on misalignment, no
    /// interpolation.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        let i = k + self.zero_index as f64;
        if (t - k * self.dt).abs() > 1e-9 * self.dt {
            return Err(Error::GridMisaligned(format!("t = {t} is not a multiple of dt = {}", self.dt)));
        }
        if i < 0.0 || i > (self.n_points() - 1) as f64 {
            return Err(Error::SupportExceeded(format!(
                "t = {t} outside sampled window [{}, {}]",
                self.t_min(),
                self.t_max()
            )));
        }
        Ok(i as usize)
    }

    pub fn mode(&self, m: usize) -> ArrayView1<'_, f64> {
        self.modes.row(m)
    }

    pub fn value(&self, m: usize, i: usize) -> f64 {
        self.modes[[m, i]]
    }

    /// State vector at grid index `i`.
    pub fn state(&self, i: usize) -> SpectralVector {
        SpectralVector(self.modes.column(i).to_owned())
    }

    pub fn state_norm(&self, i: usize) -> f64 {
        self.modes.column(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Assemble a path from raw mode data. The column at `zero_index` must be
    /// exactly zero; synthetic test paths and linear combinations enter here.
    pub fn from_modes(dt: f64, zero_index: usize, modes: Array2<f64>, hurst: f64, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("grid step must be positive, got {dt}")));
        }
        if zero_index >= modes.ncols() || modes.ncols() < 2 {
            return Err(Error::invalid("path needs >= 2 points and a zero index inside the grid"));
        }
        if modes.column(zero_index).iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("path must vanish exactly at t = 0"));
        }
        if modes.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path contains non-finite values"));
        }
        Ok(FbmPath { dt, zero_index, modes, hurst, seed })
    }

    /// An identically zero path, useful as the deterministic control.
    pub fn zero(n_modes: usize, grid: &UniformGrid) -> Self {
        FbmPath {
            dt: grid.dt,
            zero_index: grid.n_neg,
            modes: Array2::zeros((n_modes, grid.n_points())),
            hurst: 0.5,
            seed: 0,
        }
    }

    /// Path shift `(theta_t omega)(s) = omega(s + t) - omega(t)` for a
    /// grid-aligned `t`; the sampled window moves to `[t_min - t, t_max - t]`.
    pub fn shift(&self, t: f64) -> Result<FbmPath> {
        let k0 = self.index_of(t)?;
        let mut modes = self.modes.clone();
        for m in 0..self.n_modes() {
            let anchor = self.modes[[m, k0]];
            modes.row_mut(m).mapv_inplace(|v| v - anchor);
        }
        Ok(FbmPath { dt: self.dt, zero_index: k0, modes, hurst: self.hurst, seed: self.seed })
    }

    /// Time scaling `omega_eps(t) = omega(t / eps)`: the sampled grid
    /// contracts from step `dt` to `eps * dt`, values unchanged.
    pub fn scale_time(&self, eps: f64) -> Result<FbmPath> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
        }
        Ok(FbmPath {
            dt: self.dt * eps,
            zero_index: self.zero_index,
            modes: self.modes.clone(),
            hurst: self.hurst,
            seed: self.seed,
        })
    }

    /// Piecewise-linear evaluation at an arbitrary in-support time. Only the
    /// pathwise quadratures use this; grid operations stay interpolation-free.
    pub(crate) fn eval_linear_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_modes());
        let pos = (t / self.dt) + self.zero_index as f64;
        let i = (pos.floor() as usize).min(self.n_points() - 2);
        let w = (pos - i as f64).clamp(0.0, 1.0);
        for m in 0..self.n_modes() {
            out[m] = (1.0 - w) * self.modes[[m, i]] + w * self.modes[[m, i + 1]];
        }
    }

    /// View of the path over a grid-aligned window as a time-indexed function.
    pub fn to_grid_function(&self, t1: f64, t2: f64) -> Result<crate::spectral::GridFunction> {
        let i1 = self.index_of(t1)?;
        let i2 = self.index_of(t2)?;
        if i2 <= i1 {
            return Err(Error::invalid(format!("empty window [{t1}, {t2}]")));
        }
        let times: Vec<f64> = (i1..=i2).map(|i| self.time(i)).collect();
        let mut values = Array2::zeros((i2 - i1 + 1, self.n_modes()));
        for (row, i) in (i1..=i2).enumerate() {
            for m in 0..self.n_modes() {
                values[[row, m]] = self.modes[[m, i]];
            }
        }
        crate::spectral::GridFunction::new(times, values)
    }

    /// CSV export: header `t,mode_1,...,mode_N`, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "t")?;
        for m in 1..=self.n_modes() {
            write!(out, ",mode_{m}")?;
        }
        writeln!(out)?;
        for i in 0..self.n_points() {
            write!(out, "{}", self.time(i))?;
            for m in 0..self.n_modes() {
                write!(out, ",{}", self.modes[[m, i]])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// CSV import; `hurst` and `seed` are metadata the file does not carry.
    pub fn read_csv<R: BufRead>(input: R, hurst: f64, seed: u64) -> Result<FbmPath> {
        let mut times: Vec<f64> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut n_modes = 0usize;
        for (ln, line) in input.lines().enumerate() {
            let line = line?;
            if ln == 0 {
                n_modes = line.split(',').count().saturating_sub(1);
                if n_modes == 0 {
                    return Err(Error::invalid("CSV header must contain at least one mode column"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let t: f64 = fields
                .next()
                .ok_or_else(|| Error::invalid(format!("line {ln}: missing time")))?
                .parse()
                .map_err(|e| Error::invalid(format!("line {ln}: bad time: {e}")))?;
            let vals: Vec<f64> = fields
                .map(|f| f.parse().map_err(|e| Error::invalid(format!("line {ln}: bad value: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != n_modes {
                return Err(Error::invalid(format!("line {ln}: expected {n_modes} modes, got {}", vals.len())));
            }
            times.push(t);
            rows.push(vals);
        }
        if times.len() < 2 {
            return Err(Error::invalid("CSV path needs at least two samples"));
        }
        let zero_index = times
            .iter()
            .position(|t| t.abs() < 1e-12)
            .ok_or_else(|| Error::invalid("CSV path does not contain t = 0"))?;
        let dt = if zero_index + 1 < times.len() { times[zero_index + 1] } else { -times[zero_index - 1] };
        if !(dt > 0.0) {
            return Err(Error::invalid("could not reconstruct a positive grid step"));
        }
        for (i, t) in times.iter().enumerate() {
            let expect = (i as f64 - zero_index as f64) * dt;
            if (t - expect).abs() > 1e-9 * dt {
                return Err(Error::GridMisaligned(format!("row {i}: time {t} off the uniform grid (expected {expect})")));
            }
        }
        let mut modes = Array2::zeros((n_modes, times.len()));
        for (i, vals) in rows.iter().enumerate() {
            for (m, v) in vals.iter().enumerate() {
                modes[[m, i]] = *v;
            }
        }
        Ok(FbmPath { dt, zero_index, modes, hurst, seed })
    }
}

/// One mode of standard fBm (`Var B(t) = t^{2H}` under the default
/// convention) on a uniform grid containing zero. Exact sampling: circulant
/// embedding of the increment process, Cholesky fallback.
pub fn sample_fbm_1d(hurst: f64, grid: &UniformGrid, seed: u64) -> Result<Vec<f64>> {
    check_hurst_open(hurst)?;
    let mut rng = substream(seed, 0);
    let fgn = sample_fgn(hurst, grid.n_neg + grid.n_pos, grid.dt, &mut rng)?;
    Ok(anchor_cumsum(&fgn, grid.n_neg))
}

/// Trace-class fBm: mode `i` is an independent standard fBm scaled by
/// `sqrt(q_ii^2)`; mode `i` draws from substream `i` of the master seed.
pub fn sample_trace_class_fbm(
    q: &CovarianceSpectrum,
    hurst: f64,
    grid: &UniformGrid,
    seed: u64,
    convention: CovarianceConvention,
) -> Result<FbmPath> {
    check_hurst_open(hurst)?;
    let n_inc = grid.n_neg + grid.n_pos;
    let mut modes = Array2::zeros((q.dim(), grid.n_points()));
    for (m, q_sq) in q.q_sq.iter().enumerate() {
        let mut rng = substream(seed, m as u64);
        // Substream advances even for silent modes so the q-spectrum does not
        // re-map which random numbers later modes consume.
        let fgn = sample_fgn(hurst, n_inc, grid.dt, &mut rng)?;
        let amp = q_sq.sqrt() * convention.amplitude();
        if amp > 0.0 {
            let path = anchor_cumsum(&fgn, grid.n_neg);
            for (i, v) in path.iter().enumerate() {
                modes[[m, i]] = amp * v;
            }
        }
    }
    Ok(FbmPath { dt: grid.dt, zero_index: grid.n_neg, modes, hurst, seed })
}

fn check_hurst_open(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::invalid(format!("Hurst exponent must lie in (0,1), got {h}")));
    }
    Ok(())
}

/// Partial sums of an fGn stream anchored so that index `n_neg` is exactly 0.
fn anchor_cumsum(fgn: &[f64], n_neg: usize) -> Vec<f64> {
    let n = fgn.len() + 1;
    let mut path = vec![0.0; n];
    for i in (n_neg + 1)..n {
        path[i] = path[i - 1] + fgn[i - 1];
    }
    for i in (0..n_neg).rev() {
        path[i] = path[i + 1] - fgn[i];
    }
    path
}

/// Autocovariance of fGn increments over step `dt` at lag `k`.
fn fgn_autocov(hurst: f64, dt: f64, k: usize) -> f64 {
    let k = k as f64;
    let two_h = 2.0 * hurst;
    0.5 * dt.powf(two_h) * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Stationary Gaussian sequence with the fGn autocovariance, length `n`.
fn sample_fgn(hurst: f64, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if (hurst - 0.5).abs() < 1e-14 {
        // Brownian increments are iid; skip the embedding.
        let scale = dt.sqrt();
        return Ok(standard_normal_vec(rng, n).iter().map(|z| scale * z).collect());
    }
    if n == 1 {
        let z: f64 = standard_normal_vec(rng, 1)[0];
        return Ok(vec![fgn_autocov(hurst, dt, 0).sqrt() * z]);
    }
    match davies_harte(hurst, n, dt, rng) {
        Some(fgn) => Ok(fgn),
        None => cholesky_fgn(hurst, n, dt, rng),
    }
}

/// Davies-Harte circulant embedding. Returns `None` when the embedding is not
/// nonnegative definite so the caller can fall back.
fn davies_harte(hurst: f64, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex::new(fgn_autocov(hurst, dt, k), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex::new(fgn_autocov(hurst, dt, k), 0.0));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let eigenvals: Vec<f64> = row.iter().map(|c| c.re).collect();
    let max_eig = eigenvals.iter().cloned().fold(0.0, f64::max);
    if eigenvals.iter().any(|&e| e < -1e-10 * max_eig) {
        return None;
    }

    let gn = standard_normal_vec(rng, n);
    let gn2 = standard_normal_vec(rng, n);
    let mut w: Vec<Complex<f64>> = Vec::with_capacity(m);
    let mf = m as f64;
    for k in 0..m {
        let e = eigenvals[k].max(0.0);
        let c = if k == 0 {
            Complex::new((e / mf).sqrt() * gn[0], 0.0)
        } else if k < n {
            Complex::new(gn[k], gn2[k]) * (e / (2.0 * mf)).sqrt()
        } else if k == n {
            Complex::new((e / mf).sqrt() * gn2[0], 0.0)
        } else {
            Complex::new(gn[m - k], -gn2[m - k]) * (e / (2.0 * mf)).sqrt()
        };
        w.push(c);
    }
    fft.process(&mut w);
    Some(w[..n].iter().map(|c| c.re).collect())
}

/// Dense Cholesky sampling of the fGn covariance; exact but O(n^3), guarded
/// to desk-scale lengths.
fn cholesky_fgn(hurst: f64, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    const MAX_DENSE: usize = 4096;
    if n > MAX_DENSE {
        return Err(Error::invalid(format!(
            "circulant embedding failed and n = {n} exceeds the dense Cholesky cap {MAX_DENSE}"
        )));
    }
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = fgn_autocov(hurst, dt, i - j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::invalid("fGn covariance lost positive definiteness in Cholesky"));
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let z = standard_normal_vec(rng, n);
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[i * n + k] * z[k];
        }
        out[i] = s;
    }
    Ok(out)
}

/// Hölder/self-similarity exponent estimate by log-log regression of the
/// structure function `D(l) = mean |omega(t + l dt) - omega(t)|^2 ~ l^{2H}`.
pub fn estimate_holder_exponent(path: &FbmPath) -> Result<f64> {
    estimate_holder_exponent_modes(path.modes.view())
}

/// Same estimator on raw uniformly sampled mode data, rows = modes.
pub fn estimate_holder_exponent_modes(modes: ndarray::ArrayView2<'_, f64>) -> Result<f64> {
    let n = modes.ncols();
    if n < 256 {
        return Err(Error::invalid(format!("exponent estimate needs >= 256 grid points, got {n}")));
    }
    let max_lag = (n / 8).min(64);
    let mut lags = Vec::new();
    let mut lag = 1usize;
    while lag <= max_lag {
        lags.push(lag);
        lag *= 2;
    }
    let mut xs = Vec::with_capacity(lags.len());
    let mut ys = Vec::with_capacity(lags.len());
    for &l in &lags {
        let mut acc = 0.0;
        let count = n - l;
        for i in 0..count {
            let mut d2 = 0.0;
            for m in 0..modes.nrows() {
                let d = modes[[m, i + l]] - modes[[m, i]];
                d2 += d * d;
            }
            acc += d2;
        }
        let mean = acc / count as f64;
        if mean <= 0.0 {
            return Err(Error::invalid("structure function vanished; path is constant"));
        }
        xs.push((l as f64).ln());
        ys.push(mean.ln());
    }
    let (slope, _) = linear_fit(&xs, &ys);
    Ok(0.5 * slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{correlation, ks_two_sample, mean, variance};
    use approx::assert_relative_eq;

    #[test]
    fn hurst_pair_window() {
        assert!(HurstPair::new(0.75, 0.6).is_ok());
        assert!(HurstPair::new(0.4, 0.9).is_err());
        assert!(HurstPair::new(0.6, 0.35).is_err()); // H2 <= 1 - H1
        assert!(HurstPair::new(0.6, 0.45).is_ok());
    }

    #[test]
    fn path_zero_at_zero_every_mode() {
        let q = CovarianceSpectrum::inverse_square(3, 1.0);
        let grid = UniformGrid::two_sided(0.01, 50, 70).unwrap();
        let p = sample_trace_class_fbm(&q, 0.7, &grid, 42, CovarianceConvention::Standard).unwrap();
        let z = p.index_of(0.0).unwrap();
        for m in 0..3 {
            assert_eq!(p.value(m, z), 0.0);
        }
        assert_eq!(p.time(z), 0.0);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let q = CovarianceSpectrum::new(vec![1.0, 0.5]).unwrap();
        let grid = UniformGrid::one_sided(0.05, 64).unwrap();
        let a = sample_trace_class_fbm(&q, 0.75, &grid, 7, CovarianceConvention::Standard).unwrap();
        let b = sample_trace_class_fbm(&q, 0.75, &grid, 7, CovarianceConvention::Standard).unwrap();
        let c = sample_trace_class_fbm(&q, 0.75, &grid, 8, CovarianceConvention::Standard).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.modes, c.modes);
    }

    #[test]
    fn single_mode_reduces_to_scalar_sampler() {
        let q = CovarianceSpectrum::new(vec![1.0, 0.0]).unwrap();
        let grid = UniformGrid::one_sided(0.1, 32).unwrap();
        let p = sample_trace_class_fbm(&q, 0.8, &grid, 3, CovarianceConvention::Standard).unwrap();
        let scalar = sample_fbm_1d(0.8, &grid, 3).unwrap();
        for i in 0..p.n_points() {
            assert_eq!(p.value(0, i), scalar[i]);
            assert_eq!(p.value(1, i), 0.0);
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_path() {
        let q = CovarianceSpectrum::new(vec![0.0, 0.0]).unwrap();
        let grid = UniformGrid::one_sided(0.1, 16).unwrap();
        let p = sample_trace_class_fbm(&q, 0.6, &grid, 1, CovarianceConvention::Standard).unwrap();
        assert!(p.modes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        // H = 1/2: lag-1 correlation of increments along one long path.
        let grid = UniformGrid::one_sided(1.0, 100_001).unwrap();
        let path = sample_fbm_1d(0.5, &grid, 99).unwrap();
        let inc: Vec<f64> = path.windows(2).map(|w| w[1] - w[0]).collect();
        let r = correlation(&inc[..inc.len() - 1], &inc[1..]);
        assert!(r.abs() < 0.05, "lag-1 correlation {r}");
    }

    #[test]
    fn variance_at_unit_time_h075() {
        // Var B(1) = 1 under the standard convention, +- 3 standard errors.
        let n_samples = 100_000;
        let grid = UniformGrid::one_sided(0.125, 8).unwrap();
        let mut vals = Vec::with_capacity(n_samples);
        for s in 0..n_samples {
            let p = sample_fbm_1d(0.75, &grid, 1_000_000 + s as u64).unwrap();
            vals.push(*p.last().unwrap());
        }
        let v = variance(&vals);
        let se = (2.0 / n_samples as f64).sqrt(); // relative SE of a variance estimate
        assert!((v - 1.0).abs() < 3.0 * se, "Var = {v}, tolerance {}", 3.0 * se);
        assert!(mean(&vals).abs() < 3.0 / (n_samples as f64).sqrt() * 1.5);
    }

    #[test]
    fn doubled_convention_doubles_variance() {
        let q = CovarianceSpectrum::new(vec![1.0]).unwrap();
        let grid = UniformGrid::one_sided(0.25, 4).unwrap();
        let std = sample_trace_class_fbm(&q, 0.7, &grid, 5, CovarianceConvention::Standard).unwrap();
        let dbl = sample_trace_class_fbm(&q, 0.7, &grid, 5, CovarianceConvention::Doubled).unwrap();
        for i in 0..std.n_points() {
            assert_relative_eq!(dbl.value(0, i), std.value(0, i) * 2f64.sqrt(), max_relative = 1e-14);
        }
    }

    #[test]
    fn trace_class_norm_second_moment() {
        // E |omega(1)|^2 = sum_i q_ii^2 under the standard convention.
        let q = CovarianceSpectrum::new(vec![1.0, 0.25]).unwrap();
        let grid = UniformGrid::one_sided(0.25, 4).unwrap();
        let n_samples = 20_000;
        let mut acc = 0.0;
        for s in 0..n_samples {
            let p = sample_trace_class_fbm(&q, 0.75, &grid, 31_000 + s as u64, CovarianceConvention::Standard).unwrap();
            acc += p.state_norm(p.n_points() - 1).powi(2);
        }
        let est = acc / n_samples as f64;
        let expect = q.trace();
        // chi-square-ish fluctuation, generous 5 sigma window
        let se = expect * (2.0 / n_samples as f64).sqrt() * 1.2;
        assert!((est - expect).abs() < 5.0 * se, "E|w(1)|^2 = {est}, expected {expect}");
    }

    #[test]
    fn two_sided_cross_covariance_matches_closed_form() {
        // Cov(B(t), B(s)) = 0.5 (|t|^{2H} + |s|^{2H} - |t-s|^{2H}) including
        // pairs with opposite signs; this is what the single-stream
        // construction must reproduce.
        let h = 0.7;
        let grid = UniformGrid::two_sided(0.5, 4, 4).unwrap();
        let n_samples = 60_000;
        let (t_idx, s_idx) = (6usize, 0usize); // t = 1.0, s = -2.0
        let mut prods = Vec::with_capacity(n_samples);
        for sd in 0..n_samples {
            let p = sample_fbm_1d(h, &grid, 500_000 + sd as u64).unwrap();
            prods.push(p[t_idx] * p[s_idx]);
        }
        let est = mean(&prods);
        let (t, s) = (1.0f64, -2.0f64);
        let expect = 0.5 * (t.abs().powf(2.0 * h) + s.abs().powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
        let se = (variance(&prods) / n_samples as f64).sqrt();
        assert!((est - expect).abs() < 4.0 * se, "cov = {est}, expected {expect} +- {se}");
    }

    #[test]
    fn shift_identity_and_cocycle() {
        let q = CovarianceSpectrum::new(vec![1.0, 0.3]).unwrap();
        let grid = UniformGrid::two_sided(0.25, 16, 16).unwrap();
        let p = sample_trace_class_fbm(&q, 0.65, &grid, 12, CovarianceConvention::Standard).unwrap();

        let same = p.shift(0.0).unwrap();
        assert_eq!(same.modes, p.modes);

        let sh = p.shift(1.0).unwrap();
        assert_eq!(sh.value(0, sh.index_of(0.0).unwrap()), 0.0);

        // cocycle: theta_s theta_t = theta_{s+t} pointwise
        let a = p.shift(1.0).unwrap().shift(0.5).unwrap();
        let b = p.shift(1.5).unwrap();
        for m in 0..2 {
            for i in 0..a.n_points() {
                assert_relative_eq!(a.value(m, i), b.value(m, i), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn shift_rejects_offgrid_time() {
        let grid = UniformGrid::one_sided(0.25, 8).unwrap();
        let q = CovarianceSpectrum::new(vec![1.0]).unwrap();
        let p = sample_trace_class_fbm(&q, 0.75, &grid, 2, CovarianceConvention::Standard).unwrap();
        assert!(matches!(p.shift(0.3), Err(Error::GridMisaligned(_))));
        assert!(matches!(p.shift(9.0), Err(Error::SupportExceeded(_))));
    }

    #[test]
    fn scale_time_identity_and_grid() {
        let grid = UniformGrid::one_sided(0.25, 8).unwrap();
        let q = CovarianceSpectrum::new(vec![1.0]).unwrap();
        let p = sample_trace_class_fbm(&q, 0.75, &grid, 2, CovarianceConvention::Standard).unwrap();
        let same = p.scale_time(1.0).unwrap();
        assert_eq!(same, p);
        let sc = p.scale_time(0.25).unwrap();
        assert_eq!(sc.dt(), 0.0625);
        assert_eq!(sc.modes, p.modes);
        assert!(p.scale_time(0.0).is_err());
        assert!(p.scale_time(1.5).is_err());
    }

    #[test]
    fn scaled_variance_self_similarity() {
        // Var(omega_eps(t0)) = eps^{-2H} Var(omega(t0)) read at matching times:
        // omega_eps(eps * t) = omega(t), so compare omega at 1/eps with
        // eps^{-2H} times omega at 1.
        let h = 0.7;
        let eps: f64 = 0.25;
        let grid = UniformGrid::one_sided(0.5, 8).unwrap(); // covers [0, 4]
        let n_samples = 40_000;
        let mut at_one = Vec::new();
        let mut at_four = Vec::new();
        for s in 0..n_samples {
            let p = sample_fbm_1d(h, &grid, 700_000 + s as u64).unwrap();
            at_one.push(p[2]); // t = 1
            at_four.push(p[8]); // t = 4 = 1/eps
        }
        let ratio = variance(&at_four) / variance(&at_one);
        let expect = eps.powf(-2.0 * h);
        let se = expect * (2.0 / n_samples as f64).sqrt() * 2.0;
        assert!((ratio - expect).abs() < 4.0 * se, "ratio {ratio} vs {expect}");
    }

    #[test]
    fn increment_stationarity_ks() {
        // Increments over two disjoint time windows are identically
        // distributed. Samples must be independent for the KS p-value to
        // apply, so each draw is its own path (within one long-memory path,
        // window means wander and the test would reject spuriously).
        let grid = UniformGrid::one_sided(0.25, 16).unwrap();
        let n_samples = 10_000;
        let mut early = Vec::with_capacity(n_samples);
        let mut late = Vec::with_capacity(n_samples);
        for s in 0..n_samples {
            let p = sample_fbm_1d(0.7, &grid, 10_000 + s as u64).unwrap();
            early.push(p[2] - p[1]); // increment over [0.25, 0.50]
        }
        for s in 0..n_samples {
            let p = sample_fbm_1d(0.7, &grid, 20_000 + s as u64).unwrap();
            late.push(p[14] - p[13]); // increment over [3.25, 3.50]
        }
        let ks = ks_two_sample(&early, &late);
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    }

    #[test]
    fn modes_uncorrelated() {
        let q = CovarianceSpectrum::new(vec![1.0, 1.0]).unwrap();
        let grid = UniformGrid::one_sided(0.5, 2).unwrap();
        let n_samples = 10_000;
        let mut m0 = Vec::new();
        let mut m1 = Vec::new();
        for s in 0..n_samples {
            let p = sample_trace_class_fbm(&q, 0.75, &grid, 900_000 + s as u64, CovarianceConvention::Standard).unwrap();
            m0.push(p.value(0, 2));
            m1.push(p.value(1, 2));
        }
        let r = correlation(&m0, &m1);
        assert!(r.abs() < 0.05, "cross-mode correlation {r}");
    }

    #[test]
    fn holder_exponent_smooth_path() {
        // deterministic f(t) = t: exponent 1
        let grid = UniformGrid::one_sided(1.0 / 1024.0, 1024).unwrap();
        let mut p = FbmPath::zero(1, &grid);
        for i in 0..p.n_points() {
            let t = p.time(i);
            p.modes[[0, i]] = t;
        }
        let e = estimate_holder_exponent(&p).unwrap();
        assert!((e - 1.0).abs() < 0.05, "estimate {e}");
    }

    #[test]
    fn holder_exponent_tracks_hurst() {
        for (h, tag) in [(0.6, 0u64), (0.9, 1u64)] {
            let grid = UniformGrid::one_sided(1.0 / 8192.0, 8192).unwrap();
            let mut errs = Vec::new();
            for s in 0..50 {
                let p = FbmPath {
                    dt: grid.dt,
                    zero_index: 0,
                    modes: Array2::from_shape_vec(
                        (1, 8193),
                        sample_fbm_1d(h, &grid, 80_000 + 100 * tag + s).unwrap(),
                    )
                    .unwrap(),
                    hurst: h,
                    seed: s,
                };
                errs.push(estimate_holder_exponent(&p).unwrap() - h);
            }
            let bias = mean(&errs);
            assert!(bias.abs() < 0.1, "H = {h}: mean estimate error {bias}");
        }
    }

    #[test]
    fn holder_exponent_needs_enough_points() {
        let grid = UniformGrid::one_sided(0.1, 100).unwrap();
        let p = FbmPath::zero(1, &grid);
        assert!(estimate_holder_exponent(&p).is_err());
    }

    #[test]
    fn csv_round_trip_bitwise() {
        let q = CovarianceSpectrum::new(vec![1.0, 0.5, 0.1]).unwrap();
        let grid = UniformGrid::two_sided(0.125, 8, 24).unwrap();
        let p = sample_trace_class_fbm(&q, 0.72, &grid, 77, CovarianceConvention::Standard).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = FbmPath::read_csv(buf.as_slice(), p.hurst(), p.seed()).unwrap();
        assert_eq!(back.modes, p.modes);
        assert_eq!(back.dt(), p.dt());
        assert_eq!(back.zero_index(), p.zero_index());
    }
}
