//! Log-likelihood evaluation for state-space models.
//!
//! [`uipf_log_likelihood`] is the main estimator. [`apf_log_likelihood`] is an
//! auxiliary particle filter kept as a variance baseline, and
//! [`deterministic_log_likelihood`] handles models without process noise.
//! Every evaluator returns `-inf` together with a [`FilterFailure`] instead of
//! an error, so an optimizer can treat infeasible parameters as the worst
//! possible observation.

mod apf;
mod resample;
mod uipf;
mod ut;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use apf::{apf_filter, apf_log_likelihood};
pub use resample::{effective_sample_size, resample, systematic_indices};
pub use uipf::{
    implicit_sample, kalman_update_particle, predict_measurement, predict_particle, predictive_log_likelihood,
    uipf_filter, uipf_log_likelihood, update_log_weights, update_weights, Particle, ParticleEnsemble,
};
pub use ut::{unscented_transform, UtOutput, UtParams};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_log_density_chol, jittered_cholesky};
use crate::rng::derive_seed;
use crate::ssm::{simulate, Dataset, NoiseSpec, StateSpaceModel};

/// Filter settings shared by the particle methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodConfig {
    pub particles: usize,
    /// Variance scale of the implicit-sampling perturbation.
    pub alpha_implicit: f64,
    /// Resample when the effective sample size drops below this fraction.
    pub ess_fraction: f64,
    /// Relative diagonal jitter added before each Cholesky factorization.
    pub jitter: f64,
    /// Initial particle covariance scale when the model supplies none.
    pub init_cov: f64,
    pub ut: UtParams,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            alpha_implicit: 1e-4,
            ess_fraction: 0.5,
            jitter: 1e-10,
            init_cov: 1e-6,
            ut: UtParams::default(),
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particle count must be at least 1".into()));
        }
        if !(self.alpha_implicit > 0.0 && self.alpha_implicit < 1.0) {
            return Err(Error::Config(format!(
                "alpha_implicit must lie in (0, 1), got {}",
                self.alpha_implicit
            )));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "ess_fraction must lie in (0, 1], got {}",
                self.ess_fraction
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!(
                "jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        if !(self.init_cov > 0.0 && self.init_cov.is_finite()) {
            return Err(Error::Config(format!(
                "init_cov must be positive, got {}",
                self.init_cov
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The model rejected the parameters or produced a non-finite value.
    Model,
    /// A covariance could not be factorized.
    Degenerate,
    /// Every particle weight vanished.
    Collapse,
    Other,
}

/// Why an evaluation returned `-inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFailure {
    /// Time index (1-based) at which the failure occurred; 0 before the first step.
    pub step: usize,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodEval {
    pub value: f64,
    pub failure: Option<FilterFailure>,
}

impl LikelihoodEval {
    pub fn finite(value: f64) -> Self {
        Self { value, failure: None }
    }

    pub fn failed(failure: FilterFailure) -> Self {
        Self {
            value: f64::NEG_INFINITY,
            failure: Some(failure),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMethod {
    #[default]
    Uipf,
    Apf,
    Deterministic,
}

/// Gaussian measurement log-likelihood along the noise-free trajectory.
///
/// Exact when the model has no process noise.
pub fn deterministic_log_likelihood<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    dataset: &Dataset,
    r: &nalgebra::DMatrix<f64>,
) -> LikelihoodEval {
    let failed = |step, kind, message: String| LikelihoodEval::failed(FilterFailure { step, kind, message });
    if let Err(e) = model.check_params(theta) {
        return failed(0, FailureKind::Model, Error::from(e).to_string());
    }
    let chol = match jittered_cholesky(r, 0.0, "measurement noise") {
        Ok(c) => c,
        Err(e) => return failed(0, FailureKind::Degenerate, e.to_string()),
    };
    let x0 = model.initial_state(&dataset.inputs()[0], theta);
    let traj = match simulate(model, &x0, dataset.inputs(), theta, dataset.dt(), None, None) {
        Ok(t) => t,
        Err(e) => {
            let step = match &e {
                Error::Simulation { step, .. } => *step,
                _ => 0,
            };
            return failed(step, FailureKind::Model, e.to_string());
        }
    };
    let total = traj
        .measurements
        .iter()
        .zip(dataset.measurements())
        .map(|(h, z)| gaussian_log_density_chol(&DVector::from_column_slice(z), &DVector::from_column_slice(h), &chol))
        .sum();
    LikelihoodEval::finite(total)
}

/// Evaluates one dataset with the chosen method.
pub fn dataset_log_likelihood<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    dataset: &Dataset,
    noise: &NoiseSpec,
    method: LikelihoodMethod,
    cfg: &LikelihoodConfig,
    seed: u64,
) -> LikelihoodEval {
    match method {
        LikelihoodMethod::Uipf => uipf_log_likelihood(model, theta, dataset, noise, cfg, seed),
        LikelihoodMethod::Apf => apf_log_likelihood(model, theta, dataset, noise, cfg.particles, cfg.init_cov, seed),
        LikelihoodMethod::Deterministic => deterministic_log_likelihood(model, theta, dataset, &noise.r),
    }
}

/// Sum of per-dataset log-likelihoods; `-inf` as soon as one fails.
///
/// Every dataset is filtered with the same `seed`.
pub fn total_log_likelihood<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    datasets: &[Dataset],
    noise: &NoiseSpec,
    method: LikelihoodMethod,
    cfg: &LikelihoodConfig,
    seed: u64,
) -> LikelihoodEval {
    if datasets.is_empty() {
        return LikelihoodEval::failed(FilterFailure {
            step: 0,
            kind: FailureKind::Other,
            message: "no datasets".into(),
        });
    }
    let mut total = 0.0;
    for ds in datasets {
        let e = dataset_log_likelihood(model, theta, ds, noise, method, cfg, seed);
        if e.failure.is_some() || !e.value.is_finite() {
            return e;
        }
        total += e.value;
    }
    LikelihoodEval::finite(total)
}

/// The total log-likelihood as an optimization objective over physical θ.
///
/// Evaluation `i` is filtered with the seed `derive_seed(seed, i)`.
pub struct LikelihoodObjective<'a, M: StateSpaceModel + ?Sized> {
    pub model: &'a M,
    pub datasets: &'a [Dataset],
    pub noise: &'a NoiseSpec,
    pub method: LikelihoodMethod,
    pub cfg: LikelihoodConfig,
    pub seed: u64,
}

impl<M: StateSpaceModel + ?Sized> LikelihoodObjective<'_, M> {
    pub fn evaluate_detailed(&self, theta: &[f64], eval_index: u64) -> LikelihoodEval {
        total_log_likelihood(
            self.model,
            theta,
            self.datasets,
            self.noise,
            self.method,
            &self.cfg,
            derive_seed(self.seed, eval_index),
        )
    }
}

impl<M: StateSpaceModel + ?Sized> crate::hybrid::Objective for LikelihoodObjective<'_, M> {
    fn evaluate(&self, theta: &[f64], eval_index: u64) -> f64 {
        self.evaluate_detailed(theta, eval_index).value
    }
}
