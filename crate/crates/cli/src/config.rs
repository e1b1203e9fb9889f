//! Single-file experiment configuration: JSON-compatible, all defaults
//! embedded, every paper-hypothesis constraint re-validated at load through
//! the core constructors (Hurst window, spectral gap, declared coefficient
//! bounds).

use serde::{Deserialize, Serialize};

use fbm_averaging_core::error::{Error, Result};
use fbm_averaging_core::integral::FracParams;
use fbm_averaging_core::noise::{CovarianceConvention, CovarianceSpectrum, HurstPair};
use fbm_averaging_core::solver::{coeffs, DiffusionFn, DriftFn, SolverConfig, SystemSpec, SystemSpecParams};
use fbm_averaging_core::spectral::DiagonalOperator;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DriftConfig {
    Zero,
    Constant { values: Vec<f64> },
    /// `ax * x + ay * y`
    Linear { ax: f64, ay: f64 },
    /// `scale * tanh(x_i + y_i)`
    TanhSum { scale: f64 },
}

impl DriftConfig {
    fn build(&self, dim: usize) -> Result<DriftFn> {
        Ok(match self {
            DriftConfig::Zero => coeffs::zero_drift(dim),
            DriftConfig::Constant { values } => {
                if values.len() != dim {
                    return Err(Error::InvalidParameter(format!(
                        "constant drift has {} entries, state dimension is {dim}",
                        values.len()
                    )));
                }
                coeffs::constant_drift(ndarray::Array1::from_vec(values.clone()))
            }
            DriftConfig::Linear { ax, ay } => coeffs::linear_drift(*ax, *ay),
            DriftConfig::TanhSum { scale } => coeffs::tanh_sum_drift(*scale),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiffusionConfig {
    Zero,
    Identity,
    /// `(base + amp tanh(x_1)) id`
    ScalarTanh { base: f64, amp: f64 },
}

impl DiffusionConfig {
    fn build(&self, dim: usize) -> DiffusionFn {
        match self {
            DiffusionConfig::Zero => coeffs::zero_diffusion(dim),
            DiffusionConfig::Identity => coeffs::identity_diffusion(),
            DiffusionConfig::ScalarTanh { base, amp } => coeffs::scalar_tanh_diffusion(*base, *amp),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSection {
    pub lambda_a: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub q1_spectrum: Vec<f64>,
    pub q2_spectrum: Vec<f64>,
    pub hurst1: f64,
    pub hurst2: f64,
    pub eps: f64,
    pub f: DriftConfig,
    pub g: DriftConfig,
    pub h: DiffusionConfig,
    pub lipschitz_const: f64,
    pub f_bound: f64,
    pub h_bound: f64,
    pub h_grad_bound: f64,
    pub h_hess_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSection {
    pub dt: f64,
    pub picard_tol: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub past_horizon_fast: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSection {
    /// one-sided sample count for path-producing commands
    pub grid_points: usize,
    pub grid_dt: f64,
    /// negative-side extent (points) for two-sided paths
    pub grid_points_negative: usize,
    /// reproduce the doubled-variance covariance convention
    pub paper_covariance: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub eps_list: Vec<f64>,
    pub n_seeds: usize,
    pub t_end: f64,
    pub t_erg: f64,
    pub ergodic_paths: usize,
    pub mc_samples: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub seed: u64,
    pub system: SystemSection,
    pub solver: SolverSection,
    pub noise: NoiseSection,
    pub experiment: ExperimentSection,
}

impl Default for ExperimentFile {
    fn default() -> Self {
        ExperimentFile {
            seed: 42,
            system: SystemSection {
                lambda_a: vec![1.0, 2.0, 3.0, 4.0],
                lambda_b: vec![2.0, 3.0, 4.0, 5.0],
                q1_spectrum: vec![1.0, 0.25, 1.0 / 9.0, 0.0625],
                q2_spectrum: vec![1.0, 0.25, 1.0 / 9.0, 0.0625],
                hurst1: 0.75,
                hurst2: 0.6,
                eps: 0.1,
                f: DriftConfig::TanhSum { scale: 0.5 },
                g: DriftConfig::Linear { ax: 0.5, ay: -0.25 },
                h: DiffusionConfig::ScalarTanh { base: 0.5, amp: 0.25 },
                lipschitz_const: 0.5,
                f_bound: 1.0,
                h_bound: 1.5,
                h_grad_bound: 0.505,
                h_hess_bound: 0.5,
            },
            solver: SolverSection {
                dt: 1.0 / 256.0,
                picard_tol: 1e-8,
                rho: 10.0,
                alpha: 0.425,
                beta: 0.7,
                gamma: 0.55,
                past_horizon_fast: Some(15.0),
            },
            noise: NoiseSection {
                grid_points: 4096,
                grid_dt: 1.0 / 512.0,
                grid_points_negative: 0,
                paper_covariance: false,
            },
            experiment: ExperimentSection {
                eps_list: vec![0.2, 0.1, 0.05, 0.02],
                n_seeds: 20,
                t_end: 1.0,
                t_erg: 200.0,
                ergodic_paths: 8,
                mc_samples: 500,
                delta: 0.125,
            },
        }
    }
}

impl ExperimentFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ExperimentFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config parse error: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Re-validate every hypothesis the modules rely on; errors carry the
    /// violated constraint.
    pub fn validate(&self) -> Result<()> {
        self.hurst()?;
        self.system_spec()?;
        self.solver_config()?;
        if self.noise.grid_points < 2 {
            return Err(Error::InvalidParameter("noise.grid_points must be at least 2".into()));
        }
        if !(self.noise.grid_dt > 0.0) {
            return Err(Error::InvalidParameter("noise.grid_dt must be positive".into()));
        }
        Ok(())
    }

    pub fn hurst(&self) -> Result<HurstPair> {
        HurstPair::new(self.system.hurst1, self.system.hurst2)
    }

    pub fn convention(&self) -> CovarianceConvention {
        if self.noise.paper_covariance {
            CovarianceConvention::Doubled
        } else {
            CovarianceConvention::Standard
        }
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        let dim = self.system.lambda_a.len();
        SystemSpec::new(SystemSpecParams {
            slow_op: DiagonalOperator::new(self.system.lambda_a.clone())?,
            fast_op: DiagonalOperator::new(self.system.lambda_b.clone())?,
            slow_cov: CovarianceSpectrum::new(self.system.q1_spectrum.clone())?,
            fast_cov: CovarianceSpectrum::new(self.system.q2_spectrum.clone())?,
            hurst: self.hurst()?,
            eps: self.system.eps,
            f: self.system.f.build(dim)?,
            g: self.system.g.build(dim)?,
            h: self.system.h.build(dim),
            lip: self.system.lipschitz_const,
            f_bound: self.system.f_bound,
            h_bound: self.system.h_bound,
            h_grad_bound: self.system.h_grad_bound,
            h_hess_bound: self.system.h_hess_bound,
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        Ok(SolverConfig {
            dt: self.solver.dt,
            picard_tol: self.solver.picard_tol,
            rho: self.solver.rho,
            frac: FracParams::new(self.solver.alpha, self.solver.beta, self.solver.gamma)?,
            past_horizon_fast: self.solver.past_horizon_fast,
        })
    }
}
