//! Pathwise mild solutions of the coupled slow-fast system
//!
//! `dX = A X dt + f(X, Y) dt + h(X) d omega_1`
//! `dY = (1/eps) B Y dt + (1/eps) g(X, Y) dt + d omega_{2,eps}`
//!
//! by an exponential-Euler one-step method on the slow grid, with the fast
//! component advanced on subcycles of the scaled noise grid through its
//! stationary-OU decomposition `Y = Ytilde + Z^eps`: the additive fast noise
//! enters exactly (piecewise-linear convolution), while drifts are frozen at
//! the left node of each (sub)step. A Picard iteration of the mild contraction
//! operator, discretized independently, serves as the coarse-grid oracle.

use ndarray::{Array1, Array2, ArrayView1};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integral::FracParams;
use crate::noise::{CovarianceSpectrum, FbmPath, HurstPair};
use crate::ou::{ou_evolve_from_stationary, ou_stationary, OuSpec, StepWeights};
use crate::spectral::{DiagonalOperator, GridFunction, HolderParams, SpectralVector};
use crate::util::{exp_phi1, exp_phi2, median, standard_normal_vec, substream};

/// Slow/fast drift coefficient: `(x, y) -> V`.
pub type DriftFn = Arc<dyn Fn(ArrayView1<'_, f64>, ArrayView1<'_, f64>) -> Array1<f64> + Send + Sync>;
/// Slow diffusion coefficient: `x -> L_2(V)` as an `N x N` matrix.
pub type DiffusionFn = Arc<dyn Fn(ArrayView1<'_, f64>) -> Array2<f64> + Send + Sync>;

/// Constructors for the coefficient families used by the benchmark system
/// and the test oracles.
pub mod coeffs {
    use super::*;

    pub fn zero_drift(dim: usize) -> DriftFn {
        Arc::new(move |_x, _y| Array1::zeros(dim))
    }

    pub fn constant_drift(c: Array1<f64>) -> DriftFn {
        Arc::new(move |_x, _y| c.clone())
    }

    /// `ax * x + ay * y`
    pub fn linear_drift(ax: f64, ay: f64) -> DriftFn {
        Arc::new(move |x, y| {
            Array1::from_shape_fn(x.len(), |i| ax * x[i] + ay * y[i])
        })
    }

    /// `ax * x + ay * y + c`
    pub fn linear_drift_offset(ax: f64, ay: f64, c: Array1<f64>) -> DriftFn {
        Arc::new(move |x, y| Array1::from_shape_fn(x.len(), |i| ax * x[i] + ay * y[i] + c[i]))
    }

    /// `scale * tanh(x_i + y_i)` coordinatewise: bounded, Lipschitz.
    pub fn tanh_sum_drift(scale: f64) -> DriftFn {
        Arc::new(move |x, y| Array1::from_shape_fn(x.len(), |i| scale * (x[i] + y[i]).tanh()))
    }

    /// `f(x, y) = x`, independent of the fast variable.
    pub fn x_identity_drift() -> DriftFn {
        linear_drift(1.0, 0.0)
    }

    /// `f(x, y) = y`.
    pub fn y_identity_drift() -> DriftFn {
        linear_drift(0.0, 1.0)
    }

    /// `f_i(x, y) = y_i^2` (not globally Lipschitz; test oracle only, pair it
    /// with `SystemSpec::new_unchecked`).
    pub fn y_squared_drift() -> DriftFn {
        Arc::new(move |_x, y| Array1::from_shape_fn(y.len(), |i| y[i] * y[i]))
    }

    pub fn zero_diffusion(dim: usize) -> DiffusionFn {
        Arc::new(move |_x| Array2::zeros((dim, dim)))
    }

    pub fn identity_diffusion() -> DiffusionFn {
        Arc::new(move |x| Array2::eye(x.len()))
    }

    /// `(base + amp * tanh(x_1)) * id`: bounded with bounded derivatives.
    pub fn scalar_tanh_diffusion(base: f64, amp: f64) -> DiffusionFn {
        Arc::new(move |x| {
            let s = base + amp * x[0].tanh();
            Array2::from_diag(&Array1::from_elem(x.len(), s))
        })
    }
}

/// The full problem datum. `lip` is the joint Lipschitz constant each of the
/// drifts obeys in `(x, y)`; `g_origin = |g(0,0)|`; `f_bound` the uniform
/// bound on the slow drift; the `h_*` fields bound the diffusion and its
/// first two derivatives. Construction audits the declared constants against
/// randomized difference quotients (the audit samples the first two
/// diffusion estimates only; the second-derivative bound stays declarative).
#[derive(Clone)]
pub struct SystemSpec {
    pub slow_op: DiagonalOperator,
    pub fast_op: DiagonalOperator,
    pub slow_cov: CovarianceSpectrum,
    pub fast_cov: CovarianceSpectrum,
    pub hurst: HurstPair,
    pub eps: f64,
    pub f: DriftFn,
    pub g: DriftFn,
    pub h: DiffusionFn,
    pub lip: f64,
    pub g_origin: f64,
    pub f_bound: f64,
    pub h_bound: f64,
    pub h_grad_bound: f64,
    pub h_hess_bound: f64,
}

impl std::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("dim", &self.dim())
            .field("eps", &self.eps)
            .field("lip", &self.lip)
            .field("lambda_a", &self.slow_op.lambda_min())
            .field("lambda_b", &self.fast_op.lambda_min())
            .finish()
    }
}

pub struct SystemSpecParams {
    pub slow_op: DiagonalOperator,
    pub fast_op: DiagonalOperator,
    pub slow_cov: CovarianceSpectrum,
    pub fast_cov: CovarianceSpectrum,
    pub hurst: HurstPair,
    pub eps: f64,
    pub f: DriftFn,
    pub g: DriftFn,
    pub h: DiffusionFn,
    pub lip: f64,
    pub f_bound: f64,
    pub h_bound: f64,
    pub h_grad_bound: f64,
    pub h_hess_bound: f64,
}

impl SystemSpec {
    pub fn new(p: SystemSpecParams) -> Result<Self> {
        let spec = Self::new_unchecked(p)?;
        spec.audit_coefficients()?;
        Ok(spec)
    }

    /// Shape checks only; skips the randomized coefficient audit. For test
    /// systems that intentionally violate the global hypotheses.
    pub fn new_unchecked(p: SystemSpecParams) -> Result<Self> {
        let dim = p.slow_op.dim();
        if p.fast_op.dim() != dim || p.slow_cov.dim() != dim || p.fast_cov.dim() != dim {
            return Err(Error::invalid("operator/covariance dimensions disagree"));
        }
        if !(p.eps > 0.0 && p.eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0,1], got {}", p.eps)));
        }
        if !(p.fast_op.lambda_min() > p.lip) {
            return Err(Error::invalid(format!(
                "need lambda_B > C1 for the fast contraction, got {} <= {}",
                p.fast_op.lambda_min(),
                p.lip
            )));
        }
        let zero = Array1::zeros(dim);
        let g_origin = norm((p.g)(zero.view(), zero.view()).view());
        Ok(SystemSpec {
            slow_op: p.slow_op,
            fast_op: p.fast_op,
            slow_cov: p.slow_cov,
            fast_cov: p.fast_cov,
            hurst: p.hurst,
            eps: p.eps,
            f: p.f,
            g: p.g,
            h: p.h,
            lip: p.lip,
            g_origin,
            f_bound: p.f_bound,
            h_bound: p.h_bound,
            h_grad_bound: p.h_grad_bound,
            h_hess_bound: p.h_hess_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.slow_op.dim()
    }

    /// `lambda_B - C1`, the fast contraction rate before the 1/eps speedup.
    pub fn spectral_gap(&self) -> f64 {
        self.fast_op.lambda_min() - self.lip
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0,1], got {eps}")));
        }
        let mut s = self.clone();
        s.eps = eps;
        Ok(s)
    }

    pub fn ou_spec(&self) -> OuSpec {
        OuSpec::new(self.fast_op.clone(), self.fast_cov.clone(), self.eps, self.hurst.h2())
            .expect("validated fields")
    }

    /// Randomized audit of the declared constants: sampled difference
    /// quotients must not exceed them beyond 0.1% slack.
    fn audit_coefficients(&self) -> Result<()> {
        let dim = self.dim();
        let mut rng = substream(0x5f3759df, 0);
        let slack = 1.001;
        for _ in 0..200 {
            let x1 = Array1::from_vec(standard_normal_vec(&mut rng, dim));
            let y1 = Array1::from_vec(standard_normal_vec(&mut rng, dim));
            let x2 = Array1::from_vec(standard_normal_vec(&mut rng, dim));
            let y2 = Array1::from_vec(standard_normal_vec(&mut rng, dim));
            let dxy = norm((&x1 - &x2).view()) + norm((&y1 - &y2).view());

            let df = (self.f)(x1.view(), y1.view()) - (self.f)(x2.view(), y2.view());
            if norm(df.view()) > self.lip * dxy * slack {
                return Err(Error::invalid(format!(
                    "slow drift violates the declared Lipschitz constant {}",
                    self.lip
                )));
            }
            let dg = (self.g)(x1.view(), y1.view()) - (self.g)(x2.view(), y2.view());
            if norm(dg.view()) > self.lip * dxy * slack {
                return Err(Error::invalid(format!(
                    "fast drift violates the declared Lipschitz constant {}",
                    self.lip
                )));
            }
            let fv = (self.f)(x1.view(), y1.view());
            if norm(fv.view()) > self.f_bound * slack {
                return Err(Error::invalid(format!("slow drift exceeds the declared bound {}", self.f_bound)));
            }
            let h1 = (self.h)(x1.view());
            let h2 = (self.h)(x2.view());
            if hs_norm(&h1) > self.h_bound * slack {
                return Err(Error::invalid(format!("diffusion exceeds the declared bound {}", self.h_bound)));
            }
            let dh = &h1 - &h2;
            let dx = norm((&x1 - &x2).view());
            if hs_norm(&dh) > self.h_grad_bound * dx * slack {
                return Err(Error::invalid(format!(
                    "diffusion violates the declared gradient bound {}",
                    self.h_grad_bound
                )));
            }
        }
        Ok(())
    }

    /// The reference desk-scale system: `lambda_A = (1,2,3,4)`,
    /// `lambda_B = (2,3,4,5)`, bounded tanh slow drift, linear fast drift,
    /// scalar-tanh diffusion, inverse-square noise spectra.
    pub fn benchmark(eps: f64) -> Result<Self> {
        let dim = 4;
        SystemSpec::new(SystemSpecParams {
            slow_op: DiagonalOperator::new(vec![1.0, 2.0, 3.0, 4.0])?,
            fast_op: DiagonalOperator::new(vec![2.0, 3.0, 4.0, 5.0])?,
            slow_cov: CovarianceSpectrum::inverse_square(dim, 1.0),
            fast_cov: CovarianceSpectrum::inverse_square(dim, 1.0),
            hurst: HurstPair::new(0.75, 0.6)?,
            eps,
            f: coeffs::tanh_sum_drift(0.5),
            g: coeffs::linear_drift(0.5, -0.25),
            h: coeffs::scalar_tanh_diffusion(0.5, 0.25),
            lip: 0.5,
            f_bound: 0.5 * (dim as f64).sqrt(),
            h_bound: 0.75 * (dim as f64).sqrt(),
            h_grad_bound: 0.25 * (dim as f64).sqrt() * 1.01,
            h_hess_bound: 0.5,
        })
    }
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn hs_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Discretization parameters: slow step, Picard stopping tolerance, the
/// exponential weight of the contraction norm, the fractional exponents, and
/// the optional override of the stationary-initialization depth (fast units).
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub picard_tol: f64,
    pub rho: f64,
    pub frac: FracParams,
    pub past_horizon_fast: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1.0 / 256.0,
            picard_tol: 1e-8,
            rho: 10.0,
            frac: FracParams::new(0.425, 0.7, 0.55).expect("valid defaults"),
            past_horizon_fast: None,
        }
    }
}

impl SolverConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn past_fast(&self, spec: &SystemSpec) -> f64 {
        self.past_horizon_fast.unwrap_or(30.0 / spec.fast_op.lambda_min())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveDiagnostics {
    pub holder_x: f64,
    pub holder_y: f64,
    pub slow_steps: usize,
    pub fast_substeps: usize,
    pub picard_iterations: Option<usize>,
    pub picard_contraction: Option<f64>,
    pub z_tail_estimate: f64,
}

/// Time-indexed slow/fast solution pair with solve diagnostics.
#[derive(Clone, Debug)]
pub struct SolutionPath {
    pub x: GridFunction,
    pub y: GridFunction,
    pub diagnostics: SolveDiagnostics,
}

impl SolutionPath {
    pub fn times(&self) -> &[f64] {
        self.x.times()
    }

    /// `t, X_1..X_N, Y_1..Y_N` rows, shortest round-trip decimals.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        let n = self.x.dim();
        write!(out, "t")?;
        for i in 1..=n {
            write!(out, ",X_{i}")?;
        }
        for i in 1..=n {
            write!(out, ",Y_{i}")?;
        }
        writeln!(out)?;
        for (row, t) in self.x.times().iter().enumerate() {
            write!(out, "{t}")?;
            for v in self.x.row(row).iter() {
                write!(out, ",{v}")?;
            }
            for v in self.y.row(row).iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Choose a fast grid step near `target` such that every `dt / eps` in the
/// experiment is an integer number of fast steps. Hard error when the eps
/// grid cannot be aligned; pathwise calculus never rounds silently.
pub fn fast_grid_step(dt: f64, eps_list: &[f64], target: f64) -> Result<f64> {
    let eps_max = eps_list.iter().cloned().fold(0.0f64, f64::max);
    if !(eps_max > 0.0) {
        return Err(Error::invalid("eps grid must contain positive entries"));
    }
    let substeps = (dt / (eps_max * target)).ceil().max(1.0);
    let step = dt / (eps_max * substeps);
    for &eps in eps_list {
        let m = dt / (eps * step);
        if (m - m.round()).abs() > 1e-9 * m {
            return Err(Error::GridMisaligned(format!(
                "eps = {eps} cannot share the fast grid of eps_max = {eps_max} (substep ratio {m})"
            )));
        }
    }
    Ok(step)
}

struct FastStepper {
    weights: StepWeights,
    drift_weight: Vec<f64>,
}

impl FastStepper {
    fn new(op: &DiagonalOperator, tau: f64) -> Self {
        // tau is the substep measured in fast time; the 1/eps drift factor
        // and the eps-long slow substep cancel into these weights.
        let drift_weight = op.eigenvalues().iter().map(|l| (1.0 - (-l * tau).exp()) / l).collect();
        FastStepper { weights: StepWeights::new(op, tau), drift_weight }
    }
}

/// Exponential-Euler mild solve of the coupled system. `omega1` must be
/// sampled exactly on the slow grid (`cfg.dt`), `omega2` on a fast grid whose
/// step divides `dt / eps`; the fast state advances by subcycling the scaled
/// noise grid with the noise entering through its stationary-OU
/// decomposition.
pub fn solve_coupled(
    spec: &SystemSpec,
    omega1: &FbmPath,
    omega2: &FbmPath,
    x0: &SpectralVector,
    y0: &SpectralVector,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<SolutionPath> {
    let dim = spec.dim();
    if omega1.n_modes() != dim || omega2.n_modes() != dim || x0.dim() != dim || y0.dim() != dim {
        return Err(Error::invalid("dimension mismatch in solve inputs"));
    }
    if (omega1.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::GridMisaligned(format!(
            "slow path step {} does not match configured dt {}",
            omega1.dt(),
            cfg.dt
        )));
    }
    let n_slow = checked_steps(t_end, cfg.dt)?;
    omega1.index_of(t_end)?;

    // fast subcycling layout
    let ratio = cfg.dt / (spec.eps * omega2.dt());
    let m_fast = ratio.round();
    if (ratio - m_fast).abs() > 1e-9 * ratio.max(1.0) || m_fast < 1.0 {
        return Err(Error::GridMisaligned(format!(
            "dt/eps = {} is not a multiple of the fast step {}",
            cfg.dt / spec.eps,
            omega2.dt()
        )));
    }
    let m_fast = m_fast as usize;

    let ou = spec.ou_spec();
    let past = cfg.past_fast(spec);
    let z_init = ou_stationary(&ou, omega2, 0.0, past)?;

    let slow_weights = SlowWeights::new(&spec.slow_op, cfg.dt);
    let fast = FastStepper::new(&spec.fast_op, omega2.dt());
    let i2_zero = omega2.index_of(0.0)?;
    omega2.index_of(t_end / spec.eps)?;

    let mut x: Vec<f64> = x0.iter().cloned().collect();
    let mut z: Vec<f64> = z_init.value.iter().cloned().collect();
    let mut ytilde: Vec<f64> = (0..dim).map(|i| y0[i] - z[i]).collect();

    let times: Vec<f64> = (0..=n_slow).map(|n| n as f64 * cfg.dt).collect();
    let mut xs = Array2::zeros((n_slow + 1, dim));
    let mut ys = Array2::zeros((n_slow + 1, dim));
    for i in 0..dim {
        xs[[0, i]] = x[i];
        ys[[0, i]] = y0[i];
    }

    let mut y_state: Vec<f64> = y0.iter().cloned().collect();
    let mut x_frozen = vec![0.0; dim];
    for n in 0..n_slow {
        x_frozen.copy_from_slice(&x);

        // slow step: left-frozen drift and diffusion, exact exponential weights
        let xv = ArrayView1::from(&x_frozen);
        let yv = ArrayView1::from(&y_state);
        let f_val = (spec.f)(xv, yv);
        let h_mat = (spec.h)(xv);
        let mut dw1 = Array1::zeros(dim);
        for i in 0..dim {
            dw1[i] = omega1.value(i, n + 1) - omega1.value(i, n);
        }
        let h_dw = h_mat.dot(&dw1);
        for i in 0..dim {
            x[i] = slow_weights.decay[i] * x[i]
                + cfg.dt * slow_weights.phi1[i] * f_val[i]
                + slow_weights.phi1[i] * h_dw[i];
        }

        // fast subcycle across [t_n, t_{n+1}] with x frozen at t_n
        let start = i2_zero + n * m_fast;
        for k in 0..m_fast {
            let idx = start + k;
            let yv = Array1::from_shape_fn(dim, |i| ytilde[i] + z[i]);
            let g_val = (spec.g)(ArrayView1::from(&x_frozen), yv.view());
            for i in 0..dim {
                ytilde[i] = fast.weights.decay[i] * ytilde[i] + fast.drift_weight[i] * g_val[i];
            }
            fast.weights.step(&mut z, |i| omega2.value(i, idx + 1) - omega2.value(i, idx));
        }
        for i in 0..dim {
            y_state[i] = ytilde[i] + z[i];
        }

        for i in 0..dim {
            xs[[n + 1, i]] = x[i];
            ys[[n + 1, i]] = y_state[i];
        }
        if x.iter().chain(y_state.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: n + 1, context: "coupled solve state".into() });
        }
    }

    let xg = GridFunction::new(times.clone(), xs)?;
    let yg = GridFunction::new(times, ys)?;
    let diagnostics = SolveDiagnostics {
        holder_x: xg.holder_seminorm(cfg.frac.gamma)?,
        holder_y: yg.holder_seminorm(cfg.frac.gamma)?,
        slow_steps: n_slow,
        fast_substeps: n_slow * m_fast,
        picard_iterations: None,
        picard_contraction: None,
        z_tail_estimate: z_init.tail_estimate,
    };
    Ok(SolutionPath { x: xg, y: yg, diagnostics })
}

struct SlowWeights {
    decay: Vec<f64>,
    phi1: Vec<f64>,
}

impl SlowWeights {
    fn new(op: &DiagonalOperator, dt: f64) -> Self {
        SlowWeights {
            decay: op.eigenvalues().iter().map(|l| (-l * dt).exp()).collect(),
            phi1: op.eigenvalues().iter().map(|l| exp_phi1(l * dt)).collect(),
        }
    }
}

fn checked_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let raw = t_end / dt;
    let n = raw.round();
    if (raw - n).abs() > 1e-9 {
        return Err(Error::GridMisaligned(format!("t_end = {t_end} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Mild solve of the averaged slow equation
/// `Xbar(t) = S_A(t) X0 + int S_A(t-r) fbar(Xbar) dr + int S_A(t-r) h(Xbar) d omega_1`
/// with the same stepping as the slow half of the coupled solver; `fbar` may
/// cache internally, hence `FnMut`.
pub fn solve_averaged<F>(
    spec: &SystemSpec,
    mut fbar: F,
    omega1: &FbmPath,
    x0: &SpectralVector,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<GridFunction>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<Array1<f64>>,
{
    let dim = spec.dim();
    if omega1.n_modes() != dim || x0.dim() != dim {
        return Err(Error::invalid("dimension mismatch in averaged solve"));
    }
    if (omega1.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::GridMisaligned("slow path step does not match dt".into()));
    }
    let n_slow = checked_steps(t_end, cfg.dt)?;
    omega1.index_of(t_end)?;
    let w = SlowWeights::new(&spec.slow_op, cfg.dt);
    let mut x: Vec<f64> = x0.iter().cloned().collect();
    let times: Vec<f64> = (0..=n_slow).map(|n| n as f64 * cfg.dt).collect();
    let mut xs = Array2::zeros((n_slow + 1, dim));
    for i in 0..dim {
        xs[[0, i]] = x[i];
    }
    for n in 0..n_slow {
        let xv = ArrayView1::from(&x);
        let f_val = fbar(xv)?;
        let h_dw = (spec.h)(xv).dot(&Array1::from_shape_fn(dim, |i| omega1.value(i, n + 1) - omega1.value(i, n)));
        for i in 0..dim {
            x[i] = w.decay[i] * x[i] + cfg.dt * w.phi1[i] * f_val[i] + w.phi1[i] * h_dw[i];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: n + 1, context: "averaged solve state".into() });
        }
        for i in 0..dim {
            xs[[n + 1, i]] = x[i];
        }
    }
    GridFunction::new(times, xs)
}

/// One application of the mild contraction operator to a candidate pair
/// path: semigroup of the initial datum, stationary-OU replacement in the
/// fast component, piecewise-linear convolution of the drift, and a direct
/// left-point Riemann-Stieltjes evaluation of the stochastic term (kept
/// independent of the marching solver's weights).
pub fn operator_t_apply(
    spec: &SystemSpec,
    u_x: &GridFunction,
    u_y: &GridFunction,
    omega1: &FbmPath,
    omega2: &FbmPath,
    x0: &SpectralVector,
    y0: &SpectralVector,
    cfg: &SolverConfig,
) -> Result<(GridFunction, GridFunction)> {
    let dim = spec.dim();
    let n = u_x.len() - 1;
    let times = u_x.times().to_vec();
    if u_y.times() != u_x.times() {
        return Err(Error::GridMisaligned("pair components live on different grids".into()));
    }
    let dt = times[1] - times[0];
    if (omega1.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::GridMisaligned("slow path step does not match the candidate grid".into()));
    }
    let t_end = *times.last().unwrap();
    let past = cfg.past_fast(spec);
    let ou = spec.ou_spec();

    // stationary orbit of the fast OU on the slow nodes
    let z0 = ou_stationary(&ou, omega2, 0.0, past)?;
    let z_orbit = ou_evolve_from_stationary(&ou, omega2, 0.0, t_end, past)?;
    let m_fast = ((dt / (spec.eps * omega2.dt())).round()) as usize;
    if m_fast == 0 {
        return Err(Error::GridMisaligned("fast grid coarser than the slow grid".into()));
    }

    let bw = SlowWeights::new(&spec.fast_op, dt / spec.eps);

    // drift values F(u) on the slow grid
    let mut f_vals = Vec::with_capacity(n + 1);
    let mut g_vals = Vec::with_capacity(n + 1);
    for k in 0..=n {
        f_vals.push((spec.f)(u_x.row(k), u_y.row(k)));
        g_vals.push((spec.g)(u_x.row(k), u_y.row(k)));
    }
    // piecewise-linear exponential convolution, one recursion per component
    let conv = |op: &DiagonalOperator, vals: &[Array1<f64>], scale: f64, h: f64| -> Vec<Array1<f64>> {
        let decay: Vec<f64> = op.eigenvalues().iter().map(|l| (-l * scale * h).exp()).collect();
        let w1: Vec<f64> = op.eigenvalues().iter().map(|l| h * scale * exp_phi1(l * scale * h)).collect();
        let w2: Vec<f64> = op.eigenvalues().iter().map(|l| h * scale * exp_phi2(l * scale * h)).collect();
        let mut acc = Array1::<f64>::zeros(dim);
        let mut out = Vec::with_capacity(vals.len());
        out.push(acc.clone());
        for k in 0..vals.len() - 1 {
            let a = &vals[k];
            let d = &vals[k + 1] - a;
            for i in 0..dim {
                acc[i] = decay[i] * acc[i] + a[i] * w1[i] + d[i] * w2[i];
            }
            out.push(acc.clone());
        }
        out
    };
    // slow drift: rate lambda_A, measure dr; fast drift: rate lambda_B/eps,
    // measure dr/eps -> both expressed through the scaled step h/eps
    let conv_x = conv(&spec.slow_op, &f_vals, 1.0, dt);
    let conv_y = {
        let decay: Vec<f64> = bw.decay.clone();
        let w1: Vec<f64> =
            spec.fast_op.eigenvalues().iter().map(|l| (dt / spec.eps) * exp_phi1(l * dt / spec.eps)).collect();
        let w2: Vec<f64> =
            spec.fast_op.eigenvalues().iter().map(|l| (dt / spec.eps) * exp_phi2(l * dt / spec.eps)).collect();
        let mut acc = Array1::<f64>::zeros(dim);
        let mut out = Vec::with_capacity(n + 1);
        out.push(acc.clone());
        for k in 0..n {
            let a = &g_vals[k];
            let d = &g_vals[k + 1] - a;
            for i in 0..dim {
                acc[i] = decay[i] * acc[i] + a[i] * w1[i] + d[i] * w2[i];
            }
            out.push(acc.clone());
        }
        out
    };

    // stochastic term: left-point sums propagated exactly per pair (t_n, t_j)
    let mut h_dw = Vec::with_capacity(n);
    for j in 0..n {
        let hm = (spec.h)(u_x.row(j));
        let dw = Array1::from_shape_fn(dim, |i| omega1.value(i, j + 1) - omega1.value(i, j));
        h_dw.push(hm.dot(&dw));
    }

    let mut out_x = Array2::zeros((n + 1, dim));
    let mut out_y = Array2::zeros((n + 1, dim));
    for node in 0..=n {
        let t = times[node];
        let mut sx = Array1::<f64>::zeros(dim);
        for j in 0..node {
            let lag = t - times[j + 1] + dt; // t - t_j
            for i in 0..dim {
                sx[i] += (-spec.slow_op.eigenvalue(i) * lag).exp() * h_dw[j][i];
            }
        }
        let z_here = z_orbit.row(node * m_fast);
        for i in 0..dim {
            let la = spec.slow_op.eigenvalue(i);
            let lb = spec.fast_op.eigenvalue(i);
            out_x[[node, i]] = (-la * t).exp() * x0[i] + conv_x[node][i] + sx[i];
            out_y[[node, i]] = (-lb * t / spec.eps).exp() * (y0[i] - z0.value[i]) + z_here[i] + conv_y[node][i];
        }
    }
    Ok((GridFunction::new(times.clone(), out_x)?, GridFunction::new(times, out_y)?))
}

/// Weighted norm of a pair path: stack the components and take the
/// gamma,rho,~ norm of the stacked function.
pub fn pair_weighted_norm(x: &GridFunction, y: &GridFunction, p: &HolderParams) -> Result<f64> {
    let n = x.len();
    let dim = x.dim();
    let mut stacked = Array2::zeros((n, 2 * dim));
    for k in 0..n {
        for i in 0..dim {
            stacked[[k, i]] = x.row(k)[i];
            stacked[[k, dim + i]] = y.row(k)[i];
        }
    }
    GridFunction::new(x.times().to_vec(), stacked)?.weighted_holder_norm(p)
}

/// Picard iteration of the contraction operator from the constant initial
/// path; the coarse-grid oracle for the marching solver. Reports iteration
/// count and the measured contraction factor; non-contraction (rho too
/// small) is an error carrying that factor.
pub fn picard_solve(
    spec: &SystemSpec,
    omega1: &FbmPath,
    omega2: &FbmPath,
    x0: &SpectralVector,
    y0: &SpectralVector,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<SolutionPath> {
    let n = checked_steps(t_end, cfg.dt)?;
    let dim = spec.dim();
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.dt).collect();
    let mut ux = GridFunction::new(times.clone(), Array2::from_shape_fn((n + 1, dim), |(_, i)| x0[i]))?;
    let mut uy = GridFunction::new(times.clone(), Array2::from_shape_fn((n + 1, dim), |(_, i)| y0[i]))?;
    let norm_p = HolderParams::new(cfg.frac.gamma, cfg.rho, true)?;

    let mut factors = Vec::new();
    let mut last_gap: Option<f64> = None;
    let mut rising = 0usize;
    for iter in 1..=200 {
        let (nx, ny) = operator_t_apply(spec, &ux, &uy, omega1, omega2, x0, y0, cfg)?;
        let dx = GridFunction::new(times.clone(), nx.values() - ux.values())?;
        let dy = GridFunction::new(times.clone(), ny.values() - uy.values())?;
        let gap = pair_weighted_norm(&dx, &dy, &norm_p)?;
        ux = nx;
        uy = ny;
        if let Some(prev) = last_gap {
            if prev > 0.0 {
                let q = gap / prev;
                factors.push(q);
                if q >= 1.0 {
                    rising += 1;
                    if rising >= 2 {
                        return Err(Error::NoConvergence(format!(
                            "Picard iteration is not contracting (factor {q:.3}); increase rho"
                        )));
                    }
                } else {
                    rising = 0;
                }
            }
        }
        last_gap = Some(gap);
        if gap < cfg.picard_tol {
            let diagnostics = SolveDiagnostics {
                holder_x: ux.holder_seminorm(cfg.frac.gamma)?,
                holder_y: uy.holder_seminorm(cfg.frac.gamma)?,
                slow_steps: n,
                fast_substeps: 0,
                picard_iterations: Some(iter),
                picard_contraction: if factors.is_empty() { None } else { Some(median(&factors)) },
                z_tail_estimate: 0.0,
            };
            return Ok(SolutionPath { x: ux, y: uy, diagnostics });
        }
    }
    Err(Error::NoConvergence("Picard iteration exhausted its budget".into()))
}

/// Fits of the contraction-operator estimates: `c_rho` is the fitted
/// coefficient of `(1 + |u|)` in the norm bound with zero data (initial
/// datum and fast noise off, isolating the rho-dependent terms), and
/// `k_rho` the fitted Lipschitz factor of the operator between two
/// candidate paths.
#[derive(Clone, Debug)]
pub struct ContractionFit {
    pub rho: f64,
    pub c_rho: f64,
    pub k_rho: f64,
}

pub fn contraction_constants_fit(
    spec: &SystemSpec,
    omega1: &FbmPath,
    t_end: f64,
    cfg: &SolverConfig,
    rho_list: &[f64],
) -> Result<Vec<ContractionFit>> {
    let n = checked_steps(t_end, cfg.dt)?;
    let dim = spec.dim();
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.dt).collect();
    // zero fast noise isolates the rho-dependent drift + stochastic terms
    let fast_grid = crate::noise::UniformGrid::two_sided(
        omega1.dt() / spec.eps,
        (cfg.past_fast(spec) / (omega1.dt() / spec.eps)).ceil() as usize + 1,
        (t_end / omega1.dt()).round() as usize + 1,
    )?;
    let omega2 = FbmPath::zero(dim, &fast_grid);
    let zero = SpectralVector::zeros(dim);

    // candidate paths: smooth deterministic shapes of unit scale
    let mut rng = substream(0xabcdef, 7);
    let mut candidates = Vec::new();
    for _ in 0..4 {
        let amp = standard_normal_vec(&mut rng, dim);
        let phase = standard_normal_vec(&mut rng, dim);
        let vals = Array2::from_shape_fn((n + 1, dim), |(k, i)| {
            amp[i] * (3.0 * times[k] + phase[i]).sin()
        });
        candidates.push(GridFunction::new(times.clone(), vals)?);
    }

    let mut out = Vec::new();
    for &rho in rho_list {
        let p = HolderParams::new(cfg.frac.gamma, rho, true)?;
        let mut c_rho: f64 = 0.0;
        let mut k_rho: f64 = 0.0;
        for a in 0..candidates.len() {
            let ux = &candidates[a];
            let uy = &candidates[(a + 1) % candidates.len()];
            let (tx, ty) = operator_t_apply(spec, ux, uy, omega1, &omega2, &zero, &zero, cfg)?;
            let norm_t = pair_weighted_norm(&tx, &ty, &p)?;
            let norm_u = pair_weighted_norm(ux, uy, &p)?;
            c_rho = c_rho.max(norm_t / (1.0 + norm_u));

            let vx = &candidates[(a + 2) % candidates.len()];
            let vy = &candidates[(a + 3) % candidates.len()];
            let (sx, sy) = operator_t_apply(spec, vx, vy, omega1, &omega2, &zero, &zero, cfg)?;
            let diff_x = GridFunction::new(times.clone(), tx.values() - sx.values())?;
            let diff_y = GridFunction::new(times.clone(), ty.values() - sy.values())?;
            let du_x = GridFunction::new(times.clone(), ux.values() - vx.values())?;
            let du_y = GridFunction::new(times.clone(), uy.values() - vy.values())?;
            let gap_u = pair_weighted_norm(&du_x, &du_y, &p)?;
            if gap_u > 0.0 {
                k_rho = k_rho.max(pair_weighted_norm(&diff_x, &diff_y, &p)? / gap_u);
            }
        }
        out.push(ContractionFit { rho, c_rho, k_rho });
    }
    Ok(out)
}

/// A-priori bound diagnostics across an eps grid: the weighted-norm ratio of
/// the slow component against `1 + |X0|` (which must be eps-independent) and
/// `eps * sup |Y|` (which must decrease with eps).
#[derive(Clone, Debug)]
pub struct AprioriReport {
    pub eps: Vec<f64>,
    pub x_ratio_median: Vec<f64>,
    pub y_scaled_sup_median: Vec<f64>,
    /// max over eps of the median ratio over its min
    pub x_ratio_spread: f64,
}

pub fn apriori_bounds_check(
    spec_template: &SystemSpec,
    eps_list: &[f64],
    seeds: &[u64],
    x0: &SpectralVector,
    y0: &SpectralVector,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<AprioriReport> {
    let p = HolderParams::new(cfg.frac.gamma, cfg.rho, true)?;
    let eps_min = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let tau = fast_grid_step(cfg.dt, eps_list, 0.01)?;
    let past = cfg.past_fast(spec_template);
    let mut x_ratio = vec![Vec::new(); eps_list.len()];
    let mut y_sup = vec![Vec::new(); eps_list.len()];
    for &seed in seeds {
        let (omega1, omega2) = sample_experiment_paths(spec_template, seed, t_end, cfg.dt, tau, eps_min, past)?;
        for (j, &eps) in eps_list.iter().enumerate() {
            let spec = spec_template.with_eps(eps)?;
            let sol = solve_coupled(&spec, &omega1, &omega2, x0, y0, t_end, cfg)?;
            x_ratio[j].push(sol.x.weighted_holder_norm(&p)? / (x0.norm() + 1.0));
            y_sup[j].push(eps * sol.y.sup_norm());
        }
    }
    let x_ratio_median: Vec<f64> = x_ratio.iter().map(|v| median(v)).collect();
    let y_scaled_sup_median: Vec<f64> = y_sup.iter().map(|v| median(v)).collect();
    let hi = x_ratio_median.iter().cloned().fold(0.0f64, f64::max);
    let lo = x_ratio_median.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(AprioriReport {
        eps: eps_list.to_vec(),
        x_ratio_median,
        y_scaled_sup_median,
        x_ratio_spread: hi / lo,
    })
}

/// Sample the driving pair for one experiment cell: the slow path on the
/// slow grid over `[0, t_end]`, the fast path on the fast grid over
/// `[-past - tau, t_end / eps_min]`. Substream 0..N-1 feed the slow path,
/// N..2N-1 the fast one.
pub fn sample_experiment_paths(
    spec: &SystemSpec,
    seed: u64,
    t_end: f64,
    dt: f64,
    tau: f64,
    eps_min: f64,
    past_fast: f64,
) -> Result<(FbmPath, FbmPath)> {
    use crate::noise::{sample_trace_class_fbm, CovarianceConvention, UniformGrid};
    let n_slow = checked_steps(t_end, dt)?;
    let slow_grid = UniformGrid::one_sided(dt, n_slow)?;
    let omega1 = sample_trace_class_fbm(&spec.slow_cov, spec.hurst.h1(), &slow_grid, seed, CovarianceConvention::Standard)?;

    let n_pos = (t_end / eps_min / tau).round() as usize;
    let n_neg = (past_fast / tau).ceil() as usize + 1;
    let fast_grid = UniformGrid::two_sided(tau, n_neg, n_pos)?;
    let omega2 = sample_trace_class_fbm(
        &spec.fast_cov,
        spec.hurst.h2(),
        &fast_grid,
        seed.wrapping_add(0x9e3779b97f4a7c15),
        CovarianceConvention::Standard,
    )?;
    Ok((omega1, omega2))
}

/// Numerical verification of the two auxiliary integral inequalities behind
/// the contraction estimates.
#[derive(Clone, Debug)]
pub struct AppendixReport {
    pub rho: Vec<f64>,
    /// `K(rho) = sup_t t^d int_0^1 e^{-rho t (1-v)} v^a (1-v)^b dv`
    pub k_of_rho: Vec<f64>,
    /// `sup_t int_0^t e^{-rho(t-r)} (t-r)^{-a} r^{-d} dr / rho^{a+d-1}`
    pub smoothing_ratio: Vec<f64>,
}

pub fn appendix_inequalities_check(
    a: f64,
    b: f64,
    d: f64,
    smoothing_a: f64,
    smoothing_d: f64,
    t_max: f64,
    rho_list: &[f64],
) -> Result<AppendixReport> {
    if !(a > -1.0 && b > -1.0 && a + b >= -1.0 && d > 0.0) {
        return Err(Error::invalid("K(rho) needs a > -1, b > -1, a + b >= -1, d > 0"));
    }
    if !(smoothing_a >= 0.0 && smoothing_d >= 0.0 && smoothing_a + smoothing_d < 1.0) {
        return Err(Error::invalid("smoothing bound needs a, d >= 0 with a + d < 1"));
    }
    if rho_list.iter().any(|&r| r < 1.0) {
        return Err(Error::invalid("rho grid must satisfy rho >= 1"));
    }

    // log-spaced t grid reaching small t ~ 1/rho_max
    let mut t_grid = Vec::new();
    let t_lo: f64 = 1e-4;
    let n_t = 240;
    for k in 0..=n_t {
        t_grid.push(t_lo * (t_max / t_lo).powf(k as f64 / n_t as f64));
    }

    let m = 1600usize;
    let k_of_rho: Vec<f64> = rho_list
        .iter()
        .map(|&rho| {
            t_grid
                .iter()
                .map(|&t| t.powf(d) * beta_kernel_integral(a, b, rho * t, m))
                .fold(0.0, f64::max)
        })
        .collect();

    let smoothing_ratio: Vec<f64> = rho_list
        .iter()
        .map(|&rho| {
            let sup = t_grid
                .iter()
                .map(|&t| convolution_integral(smoothing_a, smoothing_d, rho, t, m))
                .fold(0.0, f64::max);
            sup / rho.powf(smoothing_a + smoothing_d - 1.0)
        })
        .collect();

    Ok(AppendixReport { rho: rho_list.to_vec(), k_of_rho, smoothing_ratio })
}

/// `int_0^1 e^{-s (1-v)} v^a (1-v)^b dv` by midpoint rules with cell weights
/// exact for the endpoint power envelopes.
fn beta_kernel_integral(a: f64, b: f64, s: f64, m: usize) -> f64 {
    let mut acc = 0.0;
    // left half: envelope v^a
    let env_l = a + 1.0;
    for j in 0..m {
        let v = 0.5 * (j as f64 + 0.5) / m as f64;
        let cell = 0.5f64.powf(env_l) * (((j + 1) as f64 / m as f64).powf(env_l) - (j as f64 / m as f64).powf(env_l))
            / env_l;
        let w = cell / v.powf(a);
        acc += w * v.powf(a) * (1.0 - v).powf(b) * (-s * (1.0 - v)).exp() / v.powf(a) * v.powf(a);
    }
    // right half: envelope (1-v)^b, mirrored
    let env_r = b + 1.0;
    for j in 0..m {
        let u = 0.5 * (j as f64 + 0.5) / m as f64; // u = 1 - v
        let cell = 0.5f64.powf(env_r) * (((j + 1) as f64 / m as f64).powf(env_r) - (j as f64 / m as f64).powf(env_r))
            / env_r;
        let w = cell / u.powf(b);
        let v = 1.0 - u;
        acc += w * v.powf(a) * u.powf(b) * (-s * u).exp();
    }
    acc
}

/// `int_0^t e^{-rho (t-r)} (t-r)^{-a} r^{-d} dr` by the same endpoint-weighted
/// midpoint scheme, split at t/2.
fn convolution_integral(a: f64, d: f64, rho: f64, t: f64, m: usize) -> f64 {
    let half = 0.5 * t;
    let mut acc = 0.0;
    // r near 0: envelope r^{-d}
    let env = 1.0 - d;
    for j in 0..m {
        let r = half * (j as f64 + 0.5) / m as f64;
        let cell = half.powf(env) * (((j + 1) as f64 / m as f64).powf(env) - (j as f64 / m as f64).powf(env)) / env;
        let w = cell / r.powf(-d);
        acc += w * (-rho * (t - r)).exp() * (t - r).powf(-a) * r.powf(-d);
    }
    // r near t: envelope (t-r)^{-a}
    let env = 1.0 - a;
    for j in 0..m {
        let u = half * (j as f64 + 0.5) / m as f64; // u = t - r
        let cell = half.powf(env) * (((j + 1) as f64 / m as f64).powf(env) - (j as f64 / m as f64).powf(env)) / env;
        let w = cell / u.powf(-a);
        let r = t - u;
        acc += w * (-rho * u).exp() * u.powf(-a) * r.powf(-d);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{CovarianceConvention, UniformGrid};
    use approx::assert_relative_eq;

    fn zero_system(dim: usize, eps: f64) -> SystemSpec {
        SystemSpec::new(SystemSpecParams {
            slow_op: DiagonalOperator::new((1..=dim).map(|i| i as f64).collect()).unwrap(),
            fast_op: DiagonalOperator::new((1..=dim).map(|i| (i + 1) as f64).collect()).unwrap(),
            slow_cov: CovarianceSpectrum::inverse_square(dim, 1.0),
            fast_cov: CovarianceSpectrum::inverse_square(dim, 1.0),
            hurst: HurstPair::new(0.75, 0.6).unwrap(),
            eps,
            f: coeffs::zero_drift(dim),
            g: coeffs::zero_drift(dim),
            h: coeffs::zero_diffusion(dim),
            lip: 0.5,
            f_bound: 1e-12,
            h_bound: 1e-12,
            h_grad_bound: 1e-12,
            h_hess_bound: 0.0,
        })
        .unwrap()
    }

    fn zero_paths(spec: &SystemSpec, dt: f64, t_end: f64, past: f64) -> (FbmPath, FbmPath) {
        let n = (t_end / dt).round() as usize;
        let omega1 = FbmPath::zero(spec.dim(), &UniformGrid::one_sided(dt, n).unwrap());
        let tau = dt / spec.eps;
        let n_neg = (past / tau).ceil() as usize + 1;
        let n_pos = (t_end / spec.eps / tau).round() as usize;
        let omega2 = FbmPath::zero(spec.dim(), &UniformGrid::two_sided(tau, n_neg, n_pos).unwrap());
        (omega1, omega2)
    }

    #[test]
    fn deterministic_decay_reproduced_exactly() {
        let spec = zero_system(3, 0.5);
        let cfg = SolverConfig::default();
        let (w1, w2) = zero_paths(&spec, cfg.dt, 1.0, 30.0 / spec.fast_op.lambda_min());
        let x0 = SpectralVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y0 = SpectralVector::from_vec(vec![0.5, 0.25, -1.0]);
        let sol = solve_coupled(&spec, &w1, &w2, &x0, &y0, 1.0, &cfg).unwrap();
        let xe = sol.x.state(sol.x.len() - 1);
        let ye = sol.y.state(sol.y.len() - 1);
        for i in 0..3 {
            let la = spec.slow_op.eigenvalue(i);
            let lb = spec.fast_op.eigenvalue(i);
            assert_relative_eq!(xe[i], x0[i] * (-la).exp(), max_relative = 1e-12);
            assert_relative_eq!(ye[i], y0[i] * (-lb / 0.5).exp(), max_relative = 1e-11);
        }
        assert_eq!(sol.x.state(0), x0);
        assert_eq!(sol.y.state(0), y0);
    }

    #[test]
    fn identity_diffusion_matches_ou_module() {
        // h = id, f = 0: X is the OU evolution driven by omega1
        let dim = 2;
        let mut spec = zero_system(dim, 1.0);
        spec.h = coeffs::identity_diffusion();
        spec.h_bound = 2.0;
        let cfg = SolverConfig::default();
        let n = (1.0 / cfg.dt) as usize;
        let grid = UniformGrid::one_sided(cfg.dt, n).unwrap();
        let omega1 = crate::noise::sample_trace_class_fbm(
            &spec.slow_cov,
            0.75,
            &grid,
            99,
            CovarianceConvention::Standard,
        )
        .unwrap();
        let (_, w2) = zero_paths(&spec, cfg.dt, 1.0, 30.0);
        let x0 = SpectralVector::from_vec(vec![0.3, -0.1]);
        let sol = solve_coupled(&spec, &omega1, &w2, &x0, &SpectralVector::zeros(dim), 1.0, &cfg).unwrap();

        let ou = OuSpec::new(spec.slow_op.clone(), spec.slow_cov.clone(), 1.0, 0.75).unwrap();
        let z = crate::ou::ou_evolve(&ou, &x0, &omega1, 0.0, 1.0).unwrap();
        let gap = (&sol.x.state(sol.x.len() - 1) - &z.state(z.len() - 1)).norm();
        assert!(gap < 1e-6, "cross-module gap {gap}");
    }

    #[test]
    fn dyadic_refinement_cauchy() {
        let spec = SystemSpec::benchmark(0.5).unwrap();
        let x0 = SpectralVector::from_vec(vec![0.5, -0.25, 0.125, 0.0]);
        let y0 = SpectralVector::from_vec(vec![0.25, 0.0, -0.125, 0.1]);
        // refine the slow grid; keep one fast path fine enough for all levels
        let mut sups = Vec::new();
        let mut prev: Option<GridFunction> = None;
        for k in [128usize, 256, 512] {
            let dt = 1.0 / k as f64;
            let cfg = SolverConfig::default().with_dt(dt);
            let tau = fast_grid_step(dt, &[spec.eps], 0.005).unwrap();
            let (w1_fine, w2) = sample_experiment_paths(&spec, 5, 1.0, 1.0 / 512.0, tau, spec.eps, 15.0).unwrap();
            // subsample the finest slow path onto this grid
            let stride = 512 / k;
            let modes = ndarray::Array2::from_shape_fn((spec.dim(), k + 1), |(m, i)| w1_fine.value(m, i * stride));
            let w1 = FbmPath::from_modes(dt, 0, modes, 0.75, 5).unwrap();
            let cfgk = SolverConfig { past_horizon_fast: Some(15.0), ..cfg };
            let sol = solve_coupled(&spec, &w1, &w2, &x0, &y0, 1.0, &cfgk).unwrap();
            if let Some(prev_x) = prev.take() {
                // compare on the coarser grid nodes
                let mut sup = 0.0f64;
                for (i_c, t) in prev_x.times().iter().enumerate() {
                    let i_f = sol.x.times().iter().position(|s| (s - t).abs() < 1e-12).unwrap();
                    let d = (&prev_x.state(i_c) - &sol.x.state(i_f)).norm();
                    sup = sup.max(d);
                }
                sups.push(sup);
            }
            prev = Some(sol.x.clone());
        }
        assert!(sups[1] < sups[0] * 0.75, "refinement gaps {sups:?}");
    }

    #[test]
    fn nan_blowup_reported_with_step() {
        let dim = 2;
        let mut spec = zero_system(dim, 1.0);
        // exponential growth: legal shape, insane declared constants
        spec.f = Arc::new(|x: ArrayView1<'_, f64>, _y| Array1::from_shape_fn(x.len(), |i| (x[i] * 50.0).exp()));
        spec.f_bound = f64::INFINITY;
        let cfg = SolverConfig::default();
        let (w1, w2) = zero_paths(&spec, cfg.dt, 1.0, 30.0);
        let x0 = SpectralVector::from_vec(vec![1.0, 1.0]);
        let err = solve_coupled(&spec, &w1, &w2, &x0, &SpectralVector::zeros(dim), 1.0, &cfg).unwrap_err();
        match err {
            Error::NonFinite { step, .. } => assert!(step > 0),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn determinism_bitwise() {
        let spec = SystemSpec::benchmark(0.1).unwrap();
        let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
        let tau = fast_grid_step(cfg.dt, &[0.1], 0.005).unwrap();
        let (w1, w2) = sample_experiment_paths(&spec, 11, 1.0, cfg.dt, tau, 0.1, 15.0).unwrap();
        let x0 = SpectralVector::from_vec(vec![0.5, 0.0, 0.0, 0.0]);
        let y0 = SpectralVector::zeros(4);
        let a = solve_coupled(&spec, &w1, &w2, &x0, &y0, 1.0, &cfg).unwrap();
        let b = solve_coupled(&spec, &w1, &w2, &x0, &y0, 1.0, &cfg).unwrap();
        assert_eq!(a.x.values(), b.x.values());
        assert_eq!(a.y.values(), b.y.values());
    }

    #[test]
    fn averaged_solver_zero_drift_and_vacuous_averaging() {
        let spec = SystemSpec::benchmark(0.2).unwrap();
        let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
        let dim = spec.dim();
        let tau = fast_grid_step(cfg.dt, &[0.2], 0.005).unwrap();
        let (w1, w2) = sample_experiment_paths(&spec, 21, 1.0, cfg.dt, tau, 0.2, 15.0).unwrap();
        let x0 = SpectralVector::from_vec(vec![0.4, -0.2, 0.1, 0.0]);

        // fbar = 0, h = 0: pure decay
        let mut zspec = zero_system(dim, 0.2);
        zspec.slow_cov = spec.slow_cov.clone();
        let xs = solve_averaged(&zspec, |_x| Ok(Array1::zeros(dim)), &w1, &x0, 1.0, &cfg).unwrap();
        let last = xs.state(xs.len() - 1);
        for i in 0..dim {
            assert_relative_eq!(last[i], x0[i] * (-zspec.slow_op.eigenvalue(i)).exp(), max_relative = 1e-12);
        }

        // f independent of y: averaged equation is the slow equation; the
        // coupled and averaged solvers run the same recursion bit by bit
        let mut spec_xonly = spec.clone();
        spec_xonly.f = coeffs::linear_drift(0.3, 0.0);
        spec_xonly.f_bound = f64::INFINITY;
        let spec_xonly = SystemSpec::new_unchecked(SystemSpecParams {
            slow_op: spec_xonly.slow_op.clone(),
            fast_op: spec_xonly.fast_op.clone(),
            slow_cov: spec_xonly.slow_cov.clone(),
            fast_cov: spec_xonly.fast_cov.clone(),
            hurst: spec_xonly.hurst,
            eps: spec_xonly.eps,
            f: spec_xonly.f.clone(),
            g: spec_xonly.g.clone(),
            h: spec_xonly.h.clone(),
            lip: 0.5,
            f_bound: f64::INFINITY,
            h_bound: spec_xonly.h_bound,
            h_grad_bound: spec_xonly.h_grad_bound,
            h_hess_bound: spec_xonly.h_hess_bound,
        })
        .unwrap();
        let y0 = SpectralVector::zeros(dim);
        let coupled = solve_coupled(&spec_xonly, &w1, &w2, &x0, &y0, 1.0, &cfg).unwrap();
        let f = spec_xonly.f.clone();
        let averaged = solve_averaged(
            &spec_xonly,
            move |x| Ok(f(x, Array1::zeros(dim).view())),
            &w1,
            &x0,
            1.0,
            &cfg,
        )
        .unwrap();
        let mut sup = 0.0f64;
        for k in 0..averaged.len() {
            sup = sup.max((&averaged.state(k) - &coupled.x.state(k)).norm());
        }
        assert!(sup < 1e-14, "vacuous averaging gap {sup}");
    }

    #[test]
    fn operator_t_zero_data_is_zero() {
        let spec = zero_system(2, 1.0);
        let cfg = SolverConfig::default();
        let (w1, w2) = zero_paths(&spec, cfg.dt, 0.5, 30.0);
        let n = (0.5 / cfg.dt) as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.dt).collect();
        let mut rng = substream(3, 0);
        let ux = GridFunction::new(
            times.clone(),
            Array2::from_shape_fn((n + 1, 2), |_| standard_normal_vec(&mut rng, 1)[0]),
        )
        .unwrap();
        let uy = ux.clone();
        let zero = SpectralVector::zeros(2);
        let (tx, ty) = operator_t_apply(&spec, &ux, &uy, &w1, &w2, &zero, &zero, &cfg).unwrap();
        assert!(tx.sup_norm() == 0.0 && ty.sup_norm() == 0.0);
    }

    #[test]
    fn picard_zero_data_converges_immediately() {
        let spec = zero_system(2, 1.0);
        let cfg = SolverConfig::default();
        let (w1, w2) = zero_paths(&spec, cfg.dt, 0.5, 30.0);
        let zero = SpectralVector::zeros(2);
        let sol = picard_solve(&spec, &w1, &w2, &zero, &zero, 0.5, &cfg).unwrap();
        assert!(sol.diagnostics.picard_iterations.unwrap() <= 2);
        assert_eq!(sol.x.sup_norm(), 0.0);
    }

    #[test]
    fn picard_linear_scalar_matches_exact_exponential() {
        // f(x, y) = 0.1 x, g = 0, h = 0: X(t) = e^{(-lambda_A + 0.1) t} X0
        let dim = 1;
        let spec = SystemSpec::new_unchecked(SystemSpecParams {
            slow_op: DiagonalOperator::new(vec![1.0]).unwrap(),
            fast_op: DiagonalOperator::new(vec![2.0]).unwrap(),
            slow_cov: CovarianceSpectrum::new(vec![1.0]).unwrap(),
            fast_cov: CovarianceSpectrum::new(vec![1.0]).unwrap(),
            hurst: HurstPair::new(0.75, 0.6).unwrap(),
            eps: 1.0,
            f: coeffs::linear_drift(0.1, 0.0),
            g: coeffs::zero_drift(dim),
            h: coeffs::zero_diffusion(dim),
            lip: 0.5,
            f_bound: f64::INFINITY,
            h_bound: 0.0,
            h_grad_bound: 0.0,
            h_hess_bound: 0.0,
        })
        .unwrap();
        let cfg = SolverConfig::default().with_dt(1.0 / 128.0);
        let (w1, w2) = zero_paths(&spec, cfg.dt, 1.0, 30.0);
        let x0 = SpectralVector::from_vec(vec![1.0]);
        let sol = picard_solve(&spec, &w1, &w2, &x0, &SpectralVector::zeros(dim), 1.0, &cfg).unwrap();
        let expect = (0.1f64 - 1.0).exp();
        assert_relative_eq!(sol.x.state(sol.x.len() - 1)[0], expect, max_relative = 1e-4);
    }

    #[test]
    fn picard_agrees_with_marching_solver() {
        let spec = SystemSpec::benchmark(1.0).unwrap();
        let cfg = SolverConfig {
            dt: 1.0 / 64.0,
            picard_tol: 1e-9,
            rho: 20.0,
            frac: FracParams::new(0.425, 0.7, 0.55).unwrap(),
            past_horizon_fast: Some(15.0),
        };
        let tau = fast_grid_step(cfg.dt, &[1.0], 0.005).unwrap();
        let (w1, w2) = sample_experiment_paths(&spec, 31, 0.5, cfg.dt, tau, 1.0, 15.0).unwrap();
        let x0 = SpectralVector::from_vec(vec![0.3, -0.2, 0.1, 0.0]);
        let y0 = SpectralVector::from_vec(vec![0.1, 0.2, 0.0, -0.1]);
        let pic = picard_solve(&spec, &w1, &w2, &x0, &y0, 0.5, &cfg).unwrap();
        let march = solve_coupled(&spec, &w1, &w2, &x0, &y0, 0.5, &cfg).unwrap();
        let mut sup = 0.0f64;
        for k in 0..pic.x.len() {
            sup = sup.max((&pic.x.state(k) - &march.x.state(k)).norm());
            sup = sup.max((&pic.y.state(k) - &march.y.state(k)).norm());
        }
        assert!(sup < 5e-2, "picard vs marching gap {sup}");
    }

    #[test]
    fn operator_t_self_consistency_on_solution() {
        let spec = SystemSpec::benchmark(1.0).unwrap();
        let cfg = SolverConfig {
            dt: 1.0 / 128.0,
            picard_tol: 1e-9,
            rho: 20.0,
            frac: FracParams::new(0.425, 0.7, 0.55).unwrap(),
            past_horizon_fast: Some(15.0),
        };
        let tau = fast_grid_step(cfg.dt, &[1.0], 0.005).unwrap();
        let (w1, w2) = sample_experiment_paths(&spec, 41, 0.5, cfg.dt, tau, 1.0, 15.0).unwrap();
        let x0 = SpectralVector::from_vec(vec![0.3, -0.2, 0.1, 0.0]);
        let y0 = SpectralVector::from_vec(vec![0.1, 0.2, 0.0, -0.1]);
        let sol = solve_coupled(&spec, &w1, &w2, &x0, &y0, 0.5, &cfg).unwrap();
        let (tx, ty) = operator_t_apply(&spec, &sol.x, &sol.y, &w1, &w2, &x0, &y0, &cfg).unwrap();
        let p = HolderParams::new(cfg.frac.gamma, cfg.rho, true).unwrap();
        let dx = GridFunction::new(sol.x.times().to_vec(), tx.values() - sol.x.values()).unwrap();
        let dy = GridFunction::new(sol.y.times().to_vec(), ty.values() - sol.y.values()).unwrap();
        let resid = pair_weighted_norm(&dx, &dy, &p).unwrap();
        assert!(resid < 5e-2, "fixed-point residual {resid}");
    }

    #[test]
    fn contraction_fits_decrease_in_rho() {
        let spec = SystemSpec::benchmark(1.0).unwrap();
        let cfg = SolverConfig::default().with_dt(1.0 / 128.0);
        let tau = fast_grid_step(cfg.dt, &[1.0], 0.01).unwrap();
        let (w1, _w2) = sample_experiment_paths(&spec, 51, 1.0, cfg.dt, tau, 1.0, 15.0).unwrap();
        let fits = contraction_constants_fit(&spec, &w1, 1.0, &cfg, &[1.0, 10.0, 100.0]).unwrap();
        assert!(fits[0].c_rho > fits[1].c_rho && fits[1].c_rho > fits[2].c_rho, "{fits:?}");
        assert!(fits[0].k_rho > fits[1].k_rho && fits[1].k_rho > fits[2].k_rho, "{fits:?}");
    }

    #[test]
    fn picard_contraction_factor_decreases_in_rho() {
        let spec = SystemSpec::benchmark(1.0).unwrap();
        let tau = fast_grid_step(1.0 / 64.0, &[1.0], 0.005).unwrap();
        let (w1, w2) = sample_experiment_paths(&spec, 61, 0.5, 1.0 / 64.0, tau, 1.0, 15.0).unwrap();
        let x0 = SpectralVector::from_vec(vec![0.3, -0.2, 0.1, 0.0]);
        let y0 = SpectralVector::zeros(4);
        let mut factors = Vec::new();
        for rho in [1.0, 10.0, 100.0] {
            let cfg = SolverConfig {
                dt: 1.0 / 64.0,
                picard_tol: 1e-9,
                rho,
                frac: FracParams::new(0.425, 0.7, 0.55).unwrap(),
                past_horizon_fast: Some(15.0),
            };
            let sol = picard_solve(&spec, &w1, &w2, &x0, &y0, 0.5, &cfg).unwrap();
            factors.push(sol.diagnostics.picard_contraction.unwrap());
        }
        assert!(factors[0] > factors[1] && factors[1] > factors[2], "factors {factors:?}");
    }

    #[test]
    fn apriori_report_shapes() {
        let spec = SystemSpec::benchmark(1.0).unwrap();
        let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
        let x0 = SpectralVector::from_vec(vec![0.5, -0.25, 0.125, 0.0]);
        let y0 = SpectralVector::from_vec(vec![0.25, 0.0, -0.125, 0.1]);
        let rep =
            apriori_bounds_check(&spec, &[0.2, 0.02], &[1, 2, 3], &x0, &y0, 1.0, &cfg).unwrap();
        assert!(rep.x_ratio_spread < 2.0, "spread {}", rep.x_ratio_spread);
        assert!(rep.y_scaled_sup_median[1] < rep.y_scaled_sup_median[0], "{:?}", rep.y_scaled_sup_median);
    }

    #[test]
    fn appendix_closed_form_and_monotonicity() {
        // a = b = 0, d = 1: K(rho) = sup_t t (1 - e^{-rho t})/(rho t) = (1 - e^{-rho T})/rho
        let rep = appendix_inequalities_check(0.0, 0.0, 1.0, 0.4, 0.4, 1.0, &[1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert!(rep.k_of_rho[1] <= 0.1 + 1e-6, "K(10) = {}", rep.k_of_rho[1]);
        assert_relative_eq!(rep.k_of_rho[0], 1.0 - (-1.0f64).exp(), max_relative = 1e-3);
        for w in rep.k_of_rho.windows(2) {
            assert!(w[1] < w[0], "K not decreasing: {:?}", rep.k_of_rho);
        }
        // smoothing ratio bounded across rho
        let max = rep.smoothing_ratio.iter().cloned().fold(0.0f64, f64::max);
        let b_ref = libm::tgamma(0.6) * libm::tgamma(0.6) / libm::tgamma(1.2);
        assert!(max <= 1.5 * b_ref, "smoothing ratio {max} vs Beta bound {b_ref}");
    }

    #[test]
    fn appendix_domain_validation() {
        assert!(appendix_inequalities_check(-1.2, 0.0, 1.0, 0.4, 0.4, 1.0, &[1.0]).is_err());
        assert!(appendix_inequalities_check(0.0, 0.0, 1.0, 0.7, 0.7, 1.0, &[1.0]).is_err());
        assert!(appendix_inequalities_check(0.0, 0.0, 1.0, 0.4, 0.4, 1.0, &[0.5]).is_err());
    }

    #[test]
    fn benchmark_passes_audit_and_rejects_bad_gap() {
        assert!(SystemSpec::benchmark(0.1).is_ok());
        let bad = SystemSpec::new(SystemSpecParams {
            slow_op: DiagonalOperator::new(vec![1.0]).unwrap(),
            fast_op: DiagonalOperator::new(vec![0.4]).unwrap(),
            slow_cov: CovarianceSpectrum::new(vec![1.0]).unwrap(),
            fast_cov: CovarianceSpectrum::new(vec![1.0]).unwrap(),
            hurst: HurstPair::new(0.75, 0.6).unwrap(),
            eps: 0.1,
            f: coeffs::zero_drift(1),
            g: coeffs::zero_drift(1),
            h: coeffs::zero_diffusion(1),
            lip: 0.5,
            f_bound: 1.0,
            h_bound: 1.0,
            h_grad_bound: 1.0,
            h_hess_bound: 1.0,
        });
        assert!(bad.is_err()); // lambda_B <= C1
    }
}
