//! The frozen-slow-state fast dynamics as a random dynamical system: pullback
//! computation of its exponentially attracting random fixed point, the
//! measured attraction rate, Lipschitz dependence on the frozen state, the
//! absorbing-ball radius, the eps-scaling identity and Hölder regularity of
//! the fixed-point orbit.
//!
//! The cocycle integrates the conjugated equation: with
//! `Ytilde = Y - Z^eps(theta_s omega_2)` the noise drops out and
//! `Ytilde' = (1/eps)(B Ytilde + g(x, Ytilde + Z^eps))` is a random ODE,
//! stepped by exponential Euler on the scaled noise grid while `Z^eps`
//! advances by its exact piecewise-linear convolution.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::noise::FbmPath;
use crate::ou::{ou_stationary, OuSpec, StepWeights};
use crate::solver::SystemSpec;
use crate::spectral::{GridFunction, SpectralVector};
use crate::util::linear_fit;

/// The fast dynamics with the slow state frozen at `x`.
#[derive(Clone, Debug)]
pub struct FrozenFastSpec {
    pub base: SystemSpec,
    pub x: SpectralVector,
}

impl FrozenFastSpec {
    pub fn new(base: SystemSpec, x: SpectralVector) -> Result<Self> {
        if x.dim() != base.dim() {
            return Err(Error::invalid("frozen state dimension mismatch"));
        }
        Ok(FrozenFastSpec { base, x })
    }

    fn ou(&self) -> OuSpec {
        self.base.ou_spec()
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }
}

/// Converged pullback limit with its certificate: the horizon actually used
/// (slow time), the last Cauchy gap of the doubling schedule, the measured
/// attraction rate (when forward path support allows a fit) and the
/// absorbing-ball radius around `Z^eps(omega_2)`.
#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub y_f: SpectralVector,
    pub pullback_horizon: f64,
    pub cauchy_gap: f64,
    pub rate_estimate: Option<f64>,
    pub radius: f64,
}

struct FastWeights {
    noise: StepWeights,
    drift: Vec<f64>,
}

impl FastWeights {
    fn new(spec: &SystemSpec, tau: f64) -> Self {
        let drift = spec.fast_op.eigenvalues().iter().map(|l| (1.0 - (-l * tau).exp()) / l).collect();
        FastWeights { noise: StepWeights::new(&spec.fast_op, tau), drift }
    }
}

/// March the conjugated pair (Ytilde, Z) across scaled-grid indices
/// `[i_from, i_to]`, calling `record` with (index, Y) at every node including
/// the first. `z` must hold `Z^eps(theta_{s(i_from)} omega_2)` on entry.
fn march(
    spec: &FrozenFastSpec,
    scaled: &FbmPath,
    i_from: usize,
    i_to: usize,
    ytilde: &mut [f64],
    z: &mut [f64],
    mut record: impl FnMut(usize, &[f64]),
) {
    let dim = spec.dim();
    let w = FastWeights::new(&spec.base, scaled.dt() / spec.base.eps);
    let x_store: Vec<f64> = spec.x.iter().cloned().collect();
    let xv = ArrayView1::from(&x_store);
    let mut y_buf = vec![0.0; dim];
    for i in 0..dim {
        y_buf[i] = ytilde[i] + z[i];
    }
    record(i_from, &y_buf);
    for k in i_from..i_to {
        let g_val = (spec.base.g)(xv, ArrayView1::from(&y_buf[..]));
        for i in 0..dim {
            ytilde[i] = w.noise.decay[i] * ytilde[i] + w.drift[i] * g_val[i];
        }
        w.noise.step(z, |i| scaled.value(i, k + 1) - scaled.value(i, k));
        for i in 0..dim {
            y_buf[i] = ytilde[i] + z[i];
        }
        record(k + 1, &y_buf);
    }
}

/// Cocycle value `phi(s_to - s_from, theta_{s_from} omega_2, y_start)`
/// through the conjugated integrator; returns the terminal state.
fn evolve_value(
    spec: &FrozenFastSpec,
    omega2: &FbmPath,
    s_from: f64,
    s_to: f64,
    y_start: &SpectralVector,
    past_fast: f64,
) -> Result<SpectralVector> {
    let scaled = omega2.scale_time(spec.base.eps)?;
    let i_from = scaled.index_of(s_from)?;
    let i_to = scaled.index_of(s_to)?;
    let z0 = ou_stationary(&spec.ou(), omega2, s_from, past_fast)?;
    let mut z: Vec<f64> = z0.value.iter().cloned().collect();
    let mut ytilde: Vec<f64> = (0..spec.dim()).map(|i| y_start[i] - z[i]).collect();
    let mut last = vec![0.0; spec.dim()];
    march(spec, &scaled, i_from, i_to, &mut ytilde, &mut z, |_, y| last.copy_from_slice(y));
    let v = SpectralVector::from_vec(last);
    if !v.is_finite() {
        return Err(Error::NonFinite { step: i_to, context: "frozen fast evolution".into() });
    }
    Ok(v)
}

/// Direct (non-conjugated) integration of the frozen fast equation, noise
/// increments entering the state recursion itself. Kept as the independent
/// route for the conjugation identity check.
fn evolve_value_direct(
    spec: &FrozenFastSpec,
    omega2: &FbmPath,
    s_from: f64,
    s_to: f64,
    y_start: &SpectralVector,
) -> Result<SpectralVector> {
    let scaled = omega2.scale_time(spec.base.eps)?;
    let i_from = scaled.index_of(s_from)?;
    let i_to = scaled.index_of(s_to)?;
    let w = FastWeights::new(&spec.base, scaled.dt() / spec.base.eps);
    let x_store: Vec<f64> = spec.x.iter().cloned().collect();
    let xv = ArrayView1::from(&x_store);
    let dim = spec.dim();
    let mut y: Vec<f64> = y_start.iter().cloned().collect();
    for k in i_from..i_to {
        let g_val = (spec.base.g)(xv, ArrayView1::from(&y[..]));
        for i in 0..dim {
            y[i] = w.noise.decay[i] * y[i]
                + w.drift[i] * g_val[i]
                + w.noise.incr[i] * (scaled.value(i, k + 1) - scaled.value(i, k));
        }
    }
    Ok(SpectralVector::from_vec(y))
}

/// Pullback limit at base time 0 (slow units): `phi(t, theta_{-t} omega_2, y0)`
/// along a doubling horizon schedule until the Cauchy gap drops below `tol`,
/// cross-checked from a second start.
pub fn pullback_fixed_point(spec: &FrozenFastSpec, omega2: &FbmPath, tol: f64) -> Result<FixedPointResult> {
    pullback_fixed_point_at(spec, omega2, 0.0, tol)
}

/// As [`pullback_fixed_point`] anchored at an arbitrary grid-aligned slow
/// base time.
pub fn pullback_fixed_point_at(
    spec: &FrozenFastSpec,
    omega2: &FbmPath,
    base_slow: f64,
    tol: f64,
) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let eps = spec.base.eps;
    let gap = spec.base.spectral_gap();
    if gap < 0.05 * spec.base.fast_op.lambda_min() {
        // slow attraction: long horizons ahead, but the theory only needs
        // positivity, so warn through the error-free channel available here
        // (the doubling schedule below will simply work harder)
    }
    let past = 30.0 / spec.base.fast_op.lambda_min();
    let y_a = SpectralVector::zeros(spec.dim());
    let y_b = SpectralVector::from_fn(spec.dim(), |i| if i == 0 { 1.0 } else { 0.5 });

    let mut horizon_fast = 10.0 / gap;
    let mut prev: Option<SpectralVector> = None;
    for _ in 0..12 {
        let s_from = snap(base_slow - eps * horizon_fast, omega2.dt() * eps);
        let v = match evolve_value(spec, omega2, s_from, base_slow, &y_a, past) {
            Ok(v) => v,
            Err(Error::SupportExceeded(m)) => {
                return Err(Error::NoConvergence(format!(
                    "pullback exhausted the sampled past before reaching tol (horizon {horizon_fast} fast units): {m}"
                )))
            }
            Err(e) => return Err(e),
        };
        if let Some(p) = prev {
            let cauchy_gap = (&v - &p).norm();
            if cauchy_gap < tol {
                // y0-independence from a second start at the same horizon
                let v_b = evolve_value(spec, omega2, s_from, base_slow, &y_b, past)?;
                if (&v - &v_b).norm() > 2.0 * tol {
                    return Err(Error::NoConvergence(format!(
                        "pullback limits from two starts differ by {} > 2 tol",
                        (&v - &v_b).norm()
                    )));
                }
                let radius = absorbing_radius(spec, omega2, base_slow, tol)?;
                let z0 = ou_stationary(&spec.ou(), omega2, base_slow, past)?;
                if (&v - &z0.value).norm() > radius * (1.0 + 1e-6) + 2.0 * tol {
                    return Err(Error::NoConvergence(format!(
                        "fixed point escaped the absorbing ball: |Ytilde| = {} > radius {radius}",
                        (&v - &z0.value).norm()
                    )));
                }
                let rate_estimate = attraction_rate_auto(spec, omega2, base_slow).ok();
                return Ok(FixedPointResult {
                    y_f: v,
                    pullback_horizon: eps * horizon_fast,
                    cauchy_gap,
                    rate_estimate,
                    radius,
                });
            }
        }
        prev = Some(v);
        horizon_fast *= 2.0;
    }
    Err(Error::NoConvergence("pullback horizon schedule exhausted; is lambda_B - C1 too small?".into()))
}

fn snap(t: f64, dt: f64) -> f64 {
    (t / dt).round() * dt
}

/// Least-squares exponential rate of trajectory merging: evolve two starts
/// forward from time 0 and fit `log |gap|` against time over the window.
/// The theory puts the rate at `(lambda_B - C1)/eps` or faster.
pub fn attraction_rate(
    spec: &FrozenFastSpec,
    omega2: &FbmPath,
    y01: &SpectralVector,
    y02: &SpectralVector,
    window_slow: f64,
) -> Result<f64> {
    if (y01 - y02).norm() == 0.0 {
        return Err(Error::invalid("the two starts must differ"));
    }
    let eps = spec.base.eps;
    let scaled = omega2.scale_time(eps)?;
    let i0 = scaled.index_of(0.0)?;
    let i1 = scaled.index_of(snap(window_slow, scaled.dt()))?;
    // additive noise cancels in the difference: march both states directly
    let w = FastWeights::new(&spec.base, scaled.dt() / eps);
    let x_store: Vec<f64> = spec.x.iter().cloned().collect();
    let xv = ArrayView1::from(&x_store);
    let dim = spec.dim();
    let mut ya: Vec<f64> = y01.iter().cloned().collect();
    let mut yb: Vec<f64> = y02.iter().cloned().collect();
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let gap0 = (y01 - y02).norm();
    for k in i0..=i1 {
        let gap: f64 = ya.iter().zip(&yb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if gap < 1e-12 * gap0 {
            break;
        }
        ts.push(scaled.time(k));
        logs.push(gap.ln());
        if k == i1 {
            break;
        }
        let ga = (spec.base.g)(xv, ArrayView1::from(&ya[..]));
        let gb = (spec.base.g)(xv, ArrayView1::from(&yb[..]));
        for i in 0..dim {
            let dwz = w.noise.incr[i] * (scaled.value(i, k + 1) - scaled.value(i, k));
            ya[i] = w.noise.decay[i] * ya[i] + w.drift[i] * ga[i] + dwz;
            yb[i] = w.noise.decay[i] * yb[i] + w.drift[i] * gb[i] + dwz;
        }
    }
    if ts.len() < 4 {
        return Err(Error::NoConvergence(
            "trajectories merged to machine zero before the fit window; shrink the window".into(),
        ));
    }
    let (slope, _) = linear_fit(&ts, &logs);
    Ok(-slope)
}

fn attraction_rate_auto(spec: &FrozenFastSpec, omega2: &FbmPath, base_slow: f64) -> Result<f64> {
    let eps = spec.base.eps;
    let gap = spec.base.spectral_gap();
    let scaled_dt = omega2.dt() * eps;
    let available = omega2.t_max() * eps - base_slow;
    let window = snap((eps * 6.0 / gap).min(available), scaled_dt);
    if window <= scaled_dt * 4.0 {
        return Err(Error::NoConvergence("no forward support for a rate fit".into()));
    }
    let y01 = SpectralVector::zeros(spec.dim());
    let y02 = SpectralVector::from_fn(spec.dim(), |i| if i == 0 { 1.0 } else { 0.0 });
    let shifted = omega2.shift(base_slow / eps)?;
    attraction_rate(spec, &shifted, &y01, &y02, window)
}

/// Truncated evaluation of the absorbing-ball radius
/// `2 int_{-inf}^0 e^{(lambda_B - C1) r / eps} (1/eps)
///  (C1 (|Z^eps(theta_r omega_2)| + |x|) + C2) dr`,
/// computed in fast time with per-cell exact exponential weights so that the
/// constant-integrand case is machine-exact. The discarded tail is below
/// `tol` by choice of the horizon.
pub fn absorbing_radius(spec: &FrozenFastSpec, omega2: &FbmPath, base_slow: f64, tol: f64) -> Result<f64> {
    let gap = spec.base.spectral_gap();
    let c1 = spec.base.lip;
    let c2 = spec.base.g_origin;
    let x_norm = spec.x.norm();
    let eps = spec.base.eps;
    // fast-time horizon: weight e^{-gap * T} times the base scale below tol
    let scale = 2.0 * (c1 * (1.0 + x_norm) + c2 + 1.0) / gap;
    let horizon_fast = ((scale / tol.max(1e-14)).ln() / gap).max(5.0 / gap);
    let tau = omega2.dt();
    let n_back = (horizon_fast / tau).ceil() as usize;
    let past = 30.0 / spec.base.fast_op.lambda_min();

    // walk Z forward from the far end of the window, accumulating the
    // exponentially weighted integrand
    let base_fast = base_slow / eps;
    let far = snap(base_fast - n_back as f64 * tau, tau);
    let unit = spec.ou().with_eps(1.0)?;
    let z_init = ou_stationary(&unit, omega2, far, past)?;
    let i_far = omega2.index_of(far)?;
    let i_base = omega2.index_of(snap(base_fast, tau))?;
    let w = StepWeights::new(&spec.base.fast_op, tau);
    let mut z: Vec<f64> = z_init.value.iter().cloned().collect();
    let psi = |zn: f64| c1 * (zn + x_norm) + c2;
    let mut acc = 0.0;
    let mut prev_psi = psi(z.iter().map(|v| v * v).sum::<f64>().sqrt());
    for k in i_far..i_base {
        w.step(&mut z, |i| omega2.value(i, k + 1) - omega2.value(i, k));
        let cur_psi = psi(z.iter().map(|v| v * v).sum::<f64>().sqrt());
        // rho runs over [time(k) - base, time(k+1) - base], weight e^{gap rho}
        let rho_hi = omega2.time(k + 1) - base_fast;
        let rho_lo = omega2.time(k) - base_fast;
        let cell = ((gap * rho_hi).exp() - (gap * rho_lo).exp()) / gap;
        acc += cell * 0.5 * (prev_psi + cur_psi);
        prev_psi = cur_psi;
    }
    Ok(2.0 * acc)
}

/// `|Y_F(omega_2, x_1) - Y_F(omega_2, x_2)| / |x_1 - x_2|` at fixed noise;
/// the theory bounds this by `C1 / (lambda_B - C1)` independently of eps.
pub fn lipschitz_in_x(
    base: &SystemSpec,
    omega2: &FbmPath,
    x1: &SpectralVector,
    x2: &SpectralVector,
    eps: f64,
    tol: f64,
) -> Result<f64> {
    let dx = (x1 - x2).norm();
    if dx == 0.0 {
        return Err(Error::invalid("the two frozen states must differ"));
    }
    let spec1 = FrozenFastSpec::new(base.with_eps(eps)?, x1.clone())?;
    let spec2 = FrozenFastSpec::new(base.with_eps(eps)?, x2.clone())?;
    let f1 = pullback_fixed_point(&spec1, omega2, tol)?;
    let f2 = pullback_fixed_point(&spec2, omega2, tol)?;
    Ok((&f1.y_f - &f2.y_f).norm() / dx)
}

/// Residual of the scaling identity
/// `Y_F^eps(theta_r omega_2, x) = Y_F^1(theta_{r/eps} omega_2, x)`.
pub fn fixed_point_scaling_check(base: &SystemSpec, omega2: &FbmPath, r: f64, eps: f64, tol: f64) -> Result<f64> {
    let spec_eps = FrozenFastSpec::new(base.with_eps(eps)?, SpectralVector::zeros(base.dim()))?;
    let spec_one = FrozenFastSpec::new(base.with_eps(1.0)?, SpectralVector::zeros(base.dim()))?;
    let a = pullback_fixed_point_at(&spec_eps, omega2, r, tol)?;
    let b = pullback_fixed_point_at(&spec_one, omega2, r / eps, tol)?;
    Ok((&a.y_f - &b.y_f).norm())
}

/// The fixed-point orbit `r -> Y_F^eps(theta_r omega_2, x)` over a slow
/// window: pullback once, then forward-evolve (forward invariance of the
/// fixed point makes this the orbit).
pub fn fixed_point_orbit(
    spec: &FrozenFastSpec,
    omega2: &FbmPath,
    t_from: f64,
    t_to: f64,
    tol: f64,
) -> Result<GridFunction> {
    let init = pullback_value(spec, omega2, t_from, tol)?;
    let scaled = omega2.scale_time(spec.base.eps)?;
    let i_from = scaled.index_of(t_from)?;
    let i_to = scaled.index_of(t_to)?;
    let past = 30.0 / spec.base.fast_op.lambda_min();
    let z0 = ou_stationary(&spec.ou(), omega2, t_from, past)?;
    let mut z: Vec<f64> = z0.value.iter().cloned().collect();
    let mut ytilde: Vec<f64> = (0..spec.dim()).map(|i| init[i] - z[i]).collect();
    let mut values = Array2::zeros((i_to - i_from + 1, spec.dim()));
    let mut times = Vec::with_capacity(i_to - i_from + 1);
    for k in i_from..=i_to {
        times.push(scaled.time(k));
    }
    march(spec, &scaled, i_from, i_to, &mut ytilde, &mut z, |k, y| {
        for (i, v) in y.iter().enumerate() {
            values[[k - i_from, i]] = *v;
        }
    });
    GridFunction::new(times, values)
}

/// Bare pullback limit (no certificate fields); the workhorse for ensemble
/// averaging where only the value matters.
pub fn pullback_value(spec: &FrozenFastSpec, omega2: &FbmPath, base_slow: f64, tol: f64) -> Result<SpectralVector> {
    let eps = spec.base.eps;
    let gap = spec.base.spectral_gap();
    let past = 30.0 / spec.base.fast_op.lambda_min();
    let y0 = SpectralVector::zeros(spec.dim());
    let mut horizon_fast = 10.0 / gap;
    let mut prev: Option<SpectralVector> = None;
    for _ in 0..12 {
        let s_from = snap(base_slow - eps * horizon_fast, omega2.dt() * eps);
        let v = evolve_value(spec, omega2, s_from, base_slow, &y0, past).map_err(|e| match e {
            Error::SupportExceeded(m) => Error::NoConvergence(format!("pullback support exhausted: {m}")),
            other => other,
        })?;
        if let Some(p) = prev {
            if (&v - &p).norm() < tol {
                return Ok(v);
            }
        }
        prev = Some(v);
        horizon_fast *= 2.0;
    }
    Err(Error::NoConvergence("pullback horizon schedule exhausted".into()))
}

/// Hölder diagnostics of the fixed-point orbit: the discrete seminorm at the
/// requested exponent and the structure-function estimate of the true
/// exponent (expected near `H_2`).
#[derive(Clone, Debug)]
pub struct OrbitHolderReport {
    pub seminorm: f64,
    pub estimated_exponent: f64,
}

pub fn fixed_point_holder_check(
    spec: &FrozenFastSpec,
    omega2: &FbmPath,
    t_from: f64,
    t_to: f64,
    gamma: f64,
    tol: f64,
) -> Result<OrbitHolderReport> {
    let orbit = fixed_point_orbit(spec, omega2, t_from, t_to, tol)?;
    let seminorm = orbit.holder_seminorm(gamma)?;
    let modes = orbit.values().t().to_owned();
    let estimated_exponent = crate::noise::estimate_holder_exponent_modes(modes.view())?;
    Ok(OrbitHolderReport { seminorm, estimated_exponent })
}

/// Residual of the conjugation identity `Y_F = Ytilde_F + Z^eps`: the
/// conjugated and the direct integration routes must deliver the same
/// pullback value.
pub fn conjugation_identity_check(spec: &FrozenFastSpec, omega2: &FbmPath, tol: f64) -> Result<f64> {
    let conj = pullback_value(spec, omega2, 0.0, tol)?;
    let eps = spec.base.eps;
    let gap = spec.base.spectral_gap();
    // direct route at a horizon matching the converged schedule's scale
    let horizon_fast = 40.0 / gap;
    let s_from = snap(-eps * horizon_fast, omega2.dt() * eps);
    let direct = evolve_value_direct(spec, omega2, s_from, 0.0, &SpectralVector::zeros(spec.dim()))?;
    Ok((&conj - &direct).norm())
}
