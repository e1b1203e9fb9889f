//! The one-shot validation suite: every acceptance criterion of the artifact
//! as an executable check with its tolerance pinned in code. `Quick` runs the
//! cheap structural checks (seconds to a couple of minutes); `Full` runs
//! everything, including the end-to-end averaging experiment.
//!
//! Reports are deterministic byte-for-byte for a fixed seed: no wall times,
//! no platform-dependent formatting; floats print as shortest round-trip
//! decimals.


use rayon::prelude::*;

use crate::averaging::{
    average_drift_ergodic, average_drift_mc, convergence_experiment, ergodic_residual_smoothed, fbar_lipschitz_audit,
    tracking_eps_scaling, vacuous_control_budget, weighted_block_delta_scaling, AveragedDrift, DriftEstimator,
    ExperimentConfig, KhasConfig,
};
use crate::error::Result;
use crate::fixed_point::{attraction_rate, fixed_point_scaling_check, lipschitz_in_x, FrozenFastSpec};
use crate::integral::{lemma1_bound_check, young_sum_integral, zahle_integral, FracParams, OperatorPath};
use crate::noise::{sample_trace_class_fbm, CovarianceConvention, CovarianceSpectrum, FbmPath, UniformGrid};
use crate::ou::{ou_flow_check, ou_stationary, scaling_identity_check, OuSpec};
use crate::solver::{
    appendix_inequalities_check, apriori_bounds_check, coeffs, contraction_constants_fit, fast_grid_step,
    picard_solve, sample_experiment_paths, SolverConfig, SystemSpec,
};
use crate::spectral::{DiagonalOperator, SpectralVector};
use crate::util::{median, standard_normal_vec, substream, variance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
}

impl CheckResult {
    fn new(id: usize, name: &'static str) -> Self {
        CheckResult { id, name, passed: true, details: Vec::new() }
    }

    fn require(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.details.push(format!("{} {}", if ok { "ok  " } else { "FAIL" }, line));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("     {line}"));
    }
}

/// Run the suite. Criteria are independent; a failure in one leaves the rest
/// running. Results come back ordered by criterion id.
pub fn run_validation(level: Level, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(wrap(2, "constant-integrand-identity", c02_constant_integrand(seed)));
    out.push(wrap(4, "ou-stationarity-and-flow", c04_ou_stationarity_flow(seed)));
    out.push(wrap(5, "scaling-identities", c05_scaling_identities(seed)));
    out.push(wrap(6, "random-fixed-point-rate", c06_fixed_point_rate(seed)));
    out.push(wrap(7, "lipschitz-in-x", c07_lipschitz_in_x(seed)));
    out.push(wrap(11, "apriori-and-contraction-diagnostics", c11_apriori_contraction(seed)));
    if level == Level::Full {
        out.push(wrap(1, "young-zahle-equivalence", c01_young_zahle(seed)));
        out.push(wrap(3, "integral-bound-stability", c03_lemma1_stability(seed)));
        out.push(wrap(8, "averaged-drift-audits", c08_fbar_audits(seed)));
        out.push(wrap(9, "block-error-scalings", c09_khasminskii_scalings(seed)));
        out.push(wrap(10, "averaging-convergence", c10_convergence(seed)));
    }
    out.push(wrap(12, "report-determinism", c12_determinism(seed)));
    out.sort_by_key(|c| c.id);
    out
}

fn wrap(id: usize, name: &'static str, r: Result<CheckResult>) -> CheckResult {
    match r {
        Ok(c) => c,
        Err(e) => {
            let mut c = CheckResult::new(id, name);
            c.require(false, format!("check aborted: {e}"));
            c
        }
    }
}

/// Deterministic plain-text report: one header line per criterion, indented
/// detail lines, and an overall verdict.
pub fn report_text(results: &[CheckResult]) -> String {
    let mut s = String::new();
    let mut n_pass = 0;
    for r in results {
        s.push_str(&format!(
            "criterion {:02} {} {}\n",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.name
        ));
        for d in &r.details {
            s.push_str(&format!("  {d}\n"));
        }
        if r.passed {
            n_pass += 1;
        }
    }
    s.push_str(&format!(
        "overall: {} ({n_pass}/{} criteria)\n",
        if n_pass == results.len() { "PASS" } else { "FAIL" },
        results.len()
    ));
    s
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn benchmark_frac() -> FracParams {
    FracParams::new(0.425, 0.7, 0.55).expect("valid")
}

fn fbm_unit_interval(n: usize, h: f64, seed: u64) -> Result<FbmPath> {
    let grid = UniformGrid::one_sided(1.0 / n as f64, n)?;
    let q = CovarianceSpectrum::new(vec![1.0, 0.25])?;
    sample_trace_class_fbm(&q, h, &grid, seed, CovarianceConvention::Standard)
}

fn smooth_test_integrand(n: usize, dim: usize, seed: u64) -> Result<OperatorPath> {
    let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut rng = substream(seed, 17);
    let amp = standard_normal_vec(&mut rng, dim);
    let freq = standard_normal_vec(&mut rng, dim);
    OperatorPath::diagonal_from_fn(times, dim, move |i, t| 1.0 + 0.5 * (2.0 * freq[i].abs() * t + amp[i]).sin())
}

// criterion 1: Zähle vs Riemann-Stieltjes on smooth-integrand fBm pairs,
// relative gap < 1e-2 at n = 2048 and shrinking under grid doubling
fn c01_young_zahle(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(1, "young-zahle-equivalence");
    let p = benchmark_frac();
    let pair_results: Vec<Result<(f64, f64)>> = (0..10u64)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let mut gaps = [0.0; 2];
            for (j, n) in [2048usize, 4096].into_iter().enumerate() {
                let path = fbm_unit_interval(n, 0.75, seed.wrapping_add(100 + k))?;
                let psi = smooth_test_integrand(n, 2, seed.wrapping_add(200 + k))?;
                let z = zahle_integral(&psi, &path, &p, 0.0, 1.0)?;
                let y = young_sum_integral(&psi, &path, 0.0, 1.0)?;
                gaps[j] = (&z - &y).norm() / y.norm();
            }
            Ok((gaps[0], gaps[1]))
        })
        .collect();
    let mut coarse = Vec::new();
    let mut ratios = Vec::new();
    for r in pair_results {
        let (g2048, g4096) = r?;
        coarse.push(g2048);
        ratios.push(g4096 / g2048);
    }
    let worst = coarse.iter().cloned().fold(0.0f64, f64::max);
    c.require(worst < 1e-2, format!("max relative gap at n=2048: {worst} (tolerance 0.01)"));
    let med_ratio = median(&ratios);
    c.require(med_ratio < 1.0, format!("median gap ratio under doubling: {med_ratio} (< 1 required)"));
    Ok(c)
}

// criterion 2: a constant integrand integrates to the path increment
fn c02_constant_integrand(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(2, "constant-integrand-identity");
    let p = benchmark_frac();
    let rels: Vec<Result<f64>> = (0..5u64)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            // the identity pins no grid size; n = 8192 keeps the outer
            // quadrature error of the rough integrator well under tolerance
            let n = 8192;
            let path = fbm_unit_interval(n, 0.75, seed.wrapping_add(300 + k))?;
            let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let psi = OperatorPath::identity(times, 2)?;
            let z = zahle_integral(&psi, &path, &p, 0.0, 1.0)?;
            let inc = &path.state(path.n_points() - 1) - &path.state(path.index_of(0.0)?);
            Ok((&z - &inc).norm() / inc.norm())
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in rels {
        worst = worst.max(r?);
    }
    c.require(worst < 1e-3, format!("max relative increment error over 5 seeds: {worst} (tolerance 0.001)"));
    Ok(c)
}

// criterion 3: the Hölder bound ratio on the pathwise integral is stable
// under grid doubling across a seed ensemble
fn c03_lemma1_stability(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(3, "integral-bound-stability");
    let p = benchmark_frac();
    let per_seed: Vec<Result<(f64, f64)>> = (0..20u64)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let mut out = [0.0; 2];
            for (j, n) in [1024usize, 2048].into_iter().enumerate() {
                let path = fbm_unit_interval(n, 0.75, seed.wrapping_add(400 + k))?;
                let psi = smooth_test_integrand(n, 2, seed.wrapping_add(500 + k))?;
                out[j] = lemma1_bound_check(&psi, &path, &p, 0.0, 1.0)?.max_ratio;
            }
            Ok((out[0], out[1]))
        })
        .collect();
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    for r in per_seed {
        let (a, b) = r?;
        coarse.push(a);
        fine.push(b);
    }
    let m_coarse = median(&coarse);
    let m_fine = median(&fine);
    let drift = (m_fine - m_coarse).abs() / m_coarse;
    c.require(drift < 0.5, format!("median ratio drift under doubling: {drift} (n=1024: {m_coarse}, n=2048: {m_fine})"));
    c.note(format!("largest single-window ratio observed: {}", fine.iter().cloned().fold(0.0f64, f64::max)));
    Ok(c)
}

// criterion 4: classical stationary variance of the scalar OU at H = 1/2 and
// the flow identity of the stationary solution
fn c04_ou_stationarity_flow(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(4, "ou-stationarity-and-flow");
    let op = DiagonalOperator::new(vec![1.0])?;
    let q = CovarianceSpectrum::new(vec![1.0])?;
    let spec = OuSpec::new(op, q, 1.0, 0.5)?;
    let dt = 1.0 / 64.0;
    let n_samples = 10_000usize;
    let vals: Vec<Result<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let grid = UniformGrid::two_sided(dt, (30.0 / dt) as usize, 1)?;
            let path =
                sample_trace_class_fbm(&spec.covariance, 0.5, &grid, seed.wrapping_add(10_000 + s), CovarianceConvention::Standard)?;
            Ok(ou_stationary(&spec, &path, 0.0, 30.0)?.value[0])
        })
        .collect();
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    let v = variance(&vals);
    let se = 0.5 * (2.0 / n_samples as f64).sqrt();
    c.require((v - 0.5).abs() < 3.0 * se, format!("stationary variance {v} vs 1/(2 lambda) = 0.5 within 3 se = {}", 3.0 * se));

    // flow residual on the benchmark fast block
    let bench = SystemSpec::benchmark(1.0)?;
    let ou = bench.ou_spec();
    let tau = 1.0 / 512.0;
    let grid = UniformGrid::two_sided(tau, (24.0 / tau) as usize, (4.0 / tau) as usize)?;
    let path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &grid, seed.wrapping_add(777), CovarianceConvention::Standard)?;
    let resid = ou_flow_check(&ou, &path, 1.0, 3.0, 20.0)?;
    c.require(resid < 1e-3, format!("flow identity residual {resid} (tolerance 0.001)"));
    Ok(c)
}

// criterion 5: time-scaling identities of the stationary solution and the
// random fixed point at matched quadrature nodes
fn c05_scaling_identities(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(5, "scaling-identities");
    let bench = SystemSpec::benchmark(1.0)?;
    let tau = 1.0 / 128.0;
    let grid = UniformGrid::two_sided(tau, (90.0 / tau) as usize, (16.0 / tau) as usize)?;
    let path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &grid, seed.wrapping_add(888), CovarianceConvention::Standard)?;

    for eps in [1.0, 0.25] {
        let ou = bench.ou_spec().with_eps(eps)?;
        let r = if eps == 1.0 { 1.0 } else { 0.5 };
        let resid = scaling_identity_check(&ou, &path, r, 20.0)?;
        c.require(resid < 1e-4, format!("stationary scaling residual at eps={eps}: {resid} (tolerance 1e-4)"));
    }
    for eps in [1.0, 0.25] {
        let r = if eps == 1.0 { 1.0 } else { 2.0 };
        let resid = fixed_point_scaling_check(&bench, &path, r, eps, 1e-9)?;
        c.require(resid < 1e-4, format!("fixed-point scaling residual at eps={eps}: {resid} (tolerance 1e-4)"));
    }
    Ok(c)
}

// criterion 6: measured contraction rate of the frozen fast dynamics meets
// the (lambda_B - C1)/eps law and doubles when eps halves
fn c06_fixed_point_rate(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(6, "random-fixed-point-rate");
    let tau = 1.0 / 128.0;
    let mut rates = Vec::new();
    for eps in [0.1, 0.05] {
        let bench = SystemSpec::benchmark(eps)?;
        let grid = UniformGrid::two_sided(tau, (40.0 / tau) as usize, (20.0 / tau) as usize)?;
        let path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &grid, seed.wrapping_add(999), CovarianceConvention::Standard)?;
        let spec = FrozenFastSpec::new(bench.clone(), SpectralVector::zeros(4))?;
        let y1 = SpectralVector::from_vec(vec![1.0, 0.3, -0.2, 0.1]);
        let y2 = SpectralVector::zeros(4);
        let window = ((eps * 5.0 / bench.spectral_gap()) / (tau * eps)).round() * tau * eps;
        let rate = attraction_rate(&spec, &path, &y1, &y2, window)?;
        let floor = 0.85 * bench.spectral_gap() / eps;
        c.require(rate >= floor, format!("rate at eps={eps}: {rate} (contract floor {floor})"));
        rates.push(rate);
    }
    let ratio = rates[1] / rates[0];
    c.require((1.7..=2.3).contains(&ratio), format!("rate ratio under eps halving: {ratio} (2 +- 15% required)"));
    Ok(c)
}

// criterion 7: the fixed point's Lipschitz constant in the frozen state at
// two eps values
fn c07_lipschitz_in_x(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(7, "lipschitz-in-x");
    let bench = SystemSpec::benchmark(0.1)?;
    let bound = bench.lip / bench.spectral_gap() * 1.1;
    let tau = 1.0 / 128.0;
    let grid = UniformGrid::two_sided(tau, (60.0 / tau) as usize, 8)?;
    let path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &grid, seed.wrapping_add(1111), CovarianceConvention::Standard)?;
    let mut rng = substream(seed, 3);
    let pairs: Vec<(SpectralVector, SpectralVector)> = (0..20)
        .map(|_| {
            (
                SpectralVector::from_vec(standard_normal_vec(&mut rng, 4)),
                SpectralVector::from_vec(standard_normal_vec(&mut rng, 4)),
            )
        })
        .collect();
    for eps in [0.1, 0.05] {
        let ratios: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|(x1, x2)| lipschitz_in_x(&bench, &path, x1, x2, eps, 1e-8))
            .collect();
        let mut worst: f64 = 0.0;
        for r in ratios {
            worst = worst.max(r?);
        }
        c.require(worst <= bound, format!("max ratio over 20 pairs at eps={eps}: {worst} (bound {bound})"));
    }
    Ok(c)
}

// criterion 8: the two averaged-drift routes agree within their combined
// confidence intervals, the Lipschitz audit holds, and the smoothed ergodic
// residual decays with the averaging horizon
fn c08_fbar_audits(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(8, "averaged-drift-audits");
    let bench = SystemSpec::benchmark(1.0)?;
    let lam = bench.fast_op.lambda_min();
    let t_erg = 200.0 / lam;
    let tau = 1.0 / 64.0;
    let budget = 40.0 / bench.spectral_gap() + 30.0 / lam + 1.0;
    let grid = UniformGrid::two_sided(tau, (budget / tau).ceil() as usize, (t_erg / tau).ceil() as usize)?;
    let erg_path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &grid, seed.wrapping_add(1313), CovarianceConvention::Standard)?;

    // route agreement at 5 points
    let mut rng = substream(seed, 5);
    for k in 0..5u64 {
        let x = SpectralVector::from_vec(standard_normal_vec(&mut rng, 4));
        let (mc, ci_mc) = average_drift_mc(&bench, &x, 500, seed.wrapping_add(2000 + 100 * k))?;
        let (erg, ci_erg) = average_drift_ergodic(&bench, &x, &erg_path, t_erg)?;
        let gap = (mc.clone() - &erg).iter().map(|d| d * d).sum::<f64>().sqrt();
        let budget_ci = ci_mc.iter().map(|d| d * d).sum::<f64>().sqrt() + ci_erg.iter().map(|d| d * d).sum::<f64>().sqrt();
        c.require(gap <= budget_ci, format!("point {k}: route gap {gap} within combined CI {budget_ci}"));
    }

    // Lipschitz quotient with CI slack
    let drift = AveragedDrift::new(&bench, DriftEstimator::Ergodic { t_erg, paths: 4 }, seed.wrapping_add(3000))?;
    let pairs: Vec<(SpectralVector, SpectralVector)> = (0..10)
        .map(|_| {
            (
                SpectralVector::from_vec(standard_normal_vec(&mut rng, 4)),
                SpectralVector::from_vec(standard_normal_vec(&mut rng, 4)),
            )
        })
        .collect();
    let audit = fbar_lipschitz_audit(&drift, &pairs)?;
    c.require(
        audit.max_ratio <= audit.bound,
        format!("Lipschitz quotient {} within CI-inflated bound {}", audit.max_ratio, audit.bound),
    );

    // smoothed ergodic residual decreasing across horizons
    let horizons = [50.0 / lam, 100.0 / lam, 200.0 / lam];
    let x = SpectralVector::from_vec(vec![0.3, 0.0, -0.2, 0.1]);
    let t_ref = 16.0 * horizons[2];
    let ref_grid = UniformGrid::two_sided(tau, (budget / tau).ceil() as usize, (t_ref / tau).ceil() as usize)?;
    let ref_path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &ref_grid, seed.wrapping_add(4000), CovarianceConvention::Standard)?;
    let (fbar_ref, _) = average_drift_ergodic(&bench, &x, &ref_path, t_ref)?;
    let per_seed: Vec<Result<Vec<f64>>> = (0..24u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let g = UniformGrid::two_sided(tau, (budget / tau).ceil() as usize, (horizons[2] / tau).ceil() as usize)?;
            let path = sample_trace_class_fbm(&bench.fast_cov, bench.hurst.h2(), &g, seed.wrapping_add(5000 + s), CovarianceConvention::Standard)?;
            horizons.iter().map(|&t| ergodic_residual_smoothed(&bench, &x, &path, t, 0.5, &fbar_ref)).collect()
        })
        .collect();
    let mut by_horizon = vec![Vec::new(); horizons.len()];
    let mut ratio_10 = Vec::new();
    let mut ratio_21 = Vec::new();
    for r in per_seed {
        let r = r?;
        ratio_10.push(r[1] / r[0]);
        ratio_21.push(r[2] / r[1]);
        for (j, v) in r.into_iter().enumerate() {
            by_horizon[j].push(v);
        }
    }
    let med: Vec<f64> = by_horizon.iter().map(|v| median(v)).collect();
    // the almost-sure statement is per-path: pair each horizon doubling
    // along its own path (prefix averages), then take the ensemble median
    let m10 = median(&ratio_10);
    let m21 = median(&ratio_21);
    c.require(m10 < 1.0, format!("median per-path residual ratio T=100/T=50: {m10} (< 1)"));
    c.require(m21 < 1.0, format!("median per-path residual ratio T=200/T=100: {m21} (< 1)"));
    c.require(med[2] < med[0], format!("ensemble medians decrease across the range: {med:?}"));
    Ok(c)
}

// criterion 9: the tracking integral scales linearly in eps; the weighted
// block distance scales like delta^{1+gamma}
fn c09_khasminskii_scalings(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(9, "block-error-scalings");
    let bench = SystemSpec::benchmark(0.1)?;
    let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
    let khas = KhasConfig::new(0.125, cfg.dt)?;
    let seeds: Vec<u64> = (0..5).map(|k| seed.wrapping_add(6000 + k)).collect();
    let meds = tracking_eps_scaling(&bench, &[0.1, 0.05, 0.025], &seeds, 1.0, &cfg, &khas)?;
    for w in meds.windows(2) {
        let ratio = w[0] / w[1];
        c.require((1.4..=2.6).contains(&ratio), format!("eps-halving ratio {ratio} within 2 +- 0.6"));
    }
    c.note(format!("tracking medians per eps: {meds:?}"));

    let small = SystemSpec::benchmark(0.002)?;
    let cfg_d = SolverConfig { dt: 1.0 / 320.0, past_horizon_fast: Some(15.0), ..SolverConfig::default() };
    let dseeds: Vec<u64> = (0..3).map(|k| seed.wrapping_add(7000 + k)).collect();
    let (slope, meds_d) = weighted_block_delta_scaling(&small, &[0.2, 0.1, 0.05], &dseeds, 1.0, &cfg_d, 2.0)?;
    let gamma = cfg_d.frac.gamma;
    c.require(
        slope >= 1.0 + gamma - 0.3,
        format!("delta-scaling log-log slope {slope} >= {}", 1.0 + gamma - 0.3),
    );
    c.note(format!("weighted block medians per delta: {meds_d:?}"));
    Ok(c)
}

// criterion 10: the averaging convergence experiment itself, plus the
// vacuous control row
fn c10_convergence(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(10, "averaging-convergence");
    let bench = SystemSpec::benchmark(0.2)?;
    let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
    let exp = ExperimentConfig {
        eps_list: vec![0.2, 0.1, 0.05, 0.02],
        n_seeds: 20,
        t_end: 1.0,
        master_seed: seed,
        estimator: DriftEstimator::Ergodic { t_erg: 200.0, paths: 8 },
        delta: 0.125,
    };
    let table = convergence_experiment(&bench, &cfg, &exp)?;
    let m = &table.median_e_sup;
    for w in m.windows(2) {
        c.require(w[1] < w[0], format!("median e decreasing: {} -> {}", w[0], w[1]));
    }
    c.require(
        m[m.len() - 1] < m[0] / 2.0,
        format!("e(eps_min) = {} < e(eps_max)/2 = {}", m[m.len() - 1], m[0] / 2.0),
    );
    for row in &table.rows {
        if !(row.e_sup <= row.e_xx + row.e_hat + 1e-12) {
            c.require(false, format!("triangle decomposition violated at seed {} eps {}", row.seed, row.eps));
        }
    }
    c.note(format!("medians across eps {:?}: {m:?}", table.eps));

    // control: y-independent slow drift collapses the pipeline
    let mut control = SystemSpec::benchmark(0.2)?;
    control.f = coeffs::linear_drift(0.3, 0.0);
    control.f_bound = f64::INFINITY;
    let exp_c = ExperimentConfig {
        eps_list: vec![0.2, 0.02],
        n_seeds: 5,
        t_end: 1.0,
        master_seed: seed,
        estimator: DriftEstimator::Ergodic { t_erg: 20.0, paths: 2 },
        delta: 0.125,
    };
    let control_table = convergence_experiment(&control, &cfg, &exp_c)?;
    let budget = 2.0 * vacuous_control_budget(&control, 0.005);
    let worst = control_table.rows.iter().map(|r| r.e_sup).fold(0.0f64, f64::max);
    c.require(worst <= budget, format!("control row max e = {worst} within 2x solver tolerance {budget}"));
    Ok(c)
}

// criterion 11: a-priori bound ratios, contraction-fit monotonicity in rho,
// and the two auxiliary integral inequalities
fn c11_apriori_contraction(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(11, "apriori-and-contraction-diagnostics");
    let bench = SystemSpec::benchmark(1.0)?;
    let cfg = SolverConfig { past_horizon_fast: Some(15.0), ..SolverConfig::default() };
    let x0 = SpectralVector::from_vec(vec![0.5, -0.25, 0.125, 0.0]);
    let y0 = SpectralVector::from_vec(vec![0.25, 0.0, -0.125, 0.1]);
    let seeds: Vec<u64> = (0..10).map(|k| seed.wrapping_add(8000 + k)).collect();
    // two decades of eps
    let rep = apriori_bounds_check(&bench, &[0.2, 0.02, 0.002], &seeds, &x0, &y0, 1.0, &cfg)?;
    c.require(rep.x_ratio_spread < 2.0, format!("slow-norm ratio spread across two decades: {} (< 2)", rep.x_ratio_spread));
    c.require(
        rep.y_scaled_sup_median.windows(2).all(|w| w[1] < w[0]),
        format!("eps * sup|Y| decreasing: {:?}", rep.y_scaled_sup_median),
    );

    let tau = fast_grid_step(cfg.dt, &[1.0], 0.01)?;
    let (w1, _w2) = sample_experiment_paths(&bench, seed.wrapping_add(8100), 1.0, cfg.dt, tau, 1.0, 15.0)?;
    let fits = contraction_constants_fit(&bench, &w1, 1.0, &cfg, &[1.0, 10.0, 100.0])?;
    c.require(
        fits.windows(2).all(|w| w[1].c_rho < w[0].c_rho),
        format!("fitted C(rho) decreasing: {:?}", fits.iter().map(|f| f.c_rho).collect::<Vec<_>>()),
    );
    c.require(
        fits.windows(2).all(|w| w[1].k_rho < w[0].k_rho),
        format!("fitted K(rho) decreasing: {:?}", fits.iter().map(|f| f.k_rho).collect::<Vec<_>>()),
    );

    // Picard contraction factor decreasing in rho on a coarse grid
    let cfg_coarse = SolverConfig { dt: 1.0 / 64.0, picard_tol: 1e-9, past_horizon_fast: Some(15.0), ..SolverConfig::default() };
    let tau_c = fast_grid_step(cfg_coarse.dt, &[1.0], 0.005)?;
    let (w1c, w2c) = sample_experiment_paths(&bench, seed.wrapping_add(8200), 0.5, cfg_coarse.dt, tau_c, 1.0, 15.0)?;
    let mut factors = Vec::new();
    for rho in [1.0, 10.0, 100.0] {
        let cfg_rho = SolverConfig { rho, ..cfg_coarse.clone() };
        let sol = picard_solve(&bench, &w1c, &w2c, &x0, &y0, 0.5, &cfg_rho)?;
        factors.push(sol.diagnostics.picard_contraction.unwrap_or(f64::NAN));
    }
    c.require(
        factors[0] > factors[1] && factors[1] > factors[2],
        format!("Picard contraction factors decreasing in rho: {factors:?}"),
    );

    // auxiliary integral inequalities at the alpha-derived exponents
    let p = benchmark_frac();
    let rep2 = appendix_inequalities_check(-p.alpha, p.alpha - 1.0, p.beta - p.gamma, 0.4, 0.4, 1.0, &[1.0, 10.0, 100.0, 1000.0])?;
    c.require(
        rep2.k_of_rho.windows(2).all(|w| w[1] < w[0]),
        format!("K(rho) decreasing: {:?}", rep2.k_of_rho),
    );
    let b_ref = libm::tgamma(0.6) * libm::tgamma(0.6) / libm::tgamma(1.2);
    let max_ratio = rep2.smoothing_ratio.iter().cloned().fold(0.0f64, f64::max);
    c.require(
        max_ratio <= 1.5 * b_ref,
        format!("smoothing-bound ratio {max_ratio} bounded by 1.5 Beta(0.6,0.6) = {}", 1.5 * b_ref),
    );
    Ok(c)
}

// criterion 12: two quick runs produce byte-identical reports
fn c12_determinism(seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(12, "report-determinism");
    let run = |s: u64| -> String {
        let mut results = Vec::new();
        results.push(wrap(2, "constant-integrand-identity", c02_constant_integrand(s)));
        results.push(wrap(5, "scaling-identities", c05_scaling_identities(s)));
        report_text(&results)
    };
    let a = run(seed);
    let b = run(seed);
    c.require(a == b, format!("two quick runs byte-identical ({} bytes)", a.len()));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_is_deterministic() {
        let a = run_validation(Level::Quick, 42);
        assert!(all_passed(&a), "quick validation failed:\n{}", report_text(&a));
        let b = run_validation(Level::Quick, 42);
        assert_eq!(report_text(&a), report_text(&b));
    }
}
