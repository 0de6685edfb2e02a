//! Unscented implicit particle filter.
//!
//! Each particle carries a mean and covariance and is moved by an
//! unscented Kalman prediction/update, then re-drawn from a shrunken
//! Gaussian around the updated mean. Weights follow the predictive
//! measurement density of each particle.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::resample::resample;
use super::ut::{unscented_transform, UtParams};
use super::{FailureKind, FilterFailure, LikelihoodConfig, LikelihoodEval};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_log_density, jittered_cholesky, log_sum_exp, symmetrize};
use crate::rng::{rng_from_seed, Rng};
use crate::ssm::{Dataset, NoiseSpec, StateSpaceModel};

/// One particle: state mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `N_p` particles with normalized weights at time index `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    pub weights: Vec<f64>,
    pub step: usize,
}

impl ParticleEnsemble {
    /// `n` copies of `N(mean, cov)` with uniform weights.
    pub fn uniform(n: usize, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            particles: vec![Particle { mean, cov }; n],
            weights: vec![1.0 / n as f64; n],
            step: 0,
        }
    }
}

/// Unscented time update through `f`, plus `Q`.
#[allow(clippy::too_many_arguments)]
pub fn predict_particle<M: StateSpaceModel + ?Sized>(
    model: &M,
    particle: &Particle,
    u: &[f64],
    theta: &[f64],
    q: &DMatrix<f64>,
    dt: f64,
    ut: &UtParams,
    jitter: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let nx = model.state_dim();
    let out = unscented_transform(
        |x, y| model.transition(x, u, theta, dt, y),
        &particle.mean,
        &particle.cov,
        nx,
        ut,
        jitter,
    )?;
    Ok((out.mean, out.cov + q))
}

/// Unscented measurement prediction through `h`, plus `R`.
///
/// Returns `(z_pred, P_z, P_xz)`.
#[allow(clippy::too_many_arguments)]
pub fn predict_measurement<M: StateSpaceModel + ?Sized>(
    model: &M,
    x_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    u: &[f64],
    theta: &[f64],
    r: &DMatrix<f64>,
    ut: &UtParams,
    jitter: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let out = unscented_transform(
        |x, y| model.measurement(x, u, theta, y),
        x_pred,
        p_pred,
        model.meas_dim(),
        ut,
        jitter,
    )?;
    Ok((out.mean, out.cov + r, out.cross))
}

/// Kalman-type update of one particle; returns `(x̃, P_post)`.
pub fn kalman_update_particle(
    x_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    z_pred: &DVector<f64>,
    p_z: &DMatrix<f64>,
    p_xz: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = p_z.clone().cholesky().ok_or(Error::Degenerate {
        context: "innovation covariance",
    })?;
    let gain_t = chol.solve(&p_xz.transpose());
    let gain = gain_t.transpose();
    let x = x_pred + &gain * (z - z_pred);
    let mut p = p_pred - &gain * p_xz.transpose();
    symmetrize(&mut p);
    Ok((x, p))
}

/// Draws `x̃ + chol(P) ξ` with `ξ ~ N(0, α I)`.
pub fn implicit_sample(
    x_tilde: &DVector<f64>,
    p_post: &DMatrix<f64>,
    alpha: f64,
    rng: &mut Rng,
    jitter: f64,
) -> Result<DVector<f64>> {
    let l = jittered_cholesky(p_post, jitter, "implicit sampling")?.l();
    let scale = alpha.sqrt();
    let xi = DVector::from_fn(x_tilde.len(), |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        scale * s
    });
    Ok(x_tilde + l * xi)
}

/// Normalized `w_k ∝ w_{k-1} p_k` from log-likelihoods, in log space.
pub fn update_log_weights(prev: &[f64], log_lik: &[f64], step: usize) -> Result<Vec<f64>> {
    let logs: Vec<f64> = prev
        .iter()
        .zip(log_lik)
        .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let norm = log_sum_exp(&logs);
    if !norm.is_finite() {
        return Err(Error::FilterCollapse { step });
    }
    let mut w: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

/// Normalized `w_k ∝ w_{k-1} p_k` from linear-scale likelihoods.
pub fn update_weights(prev: &[f64], likelihoods: &[f64], step: usize) -> Result<Vec<f64>> {
    let logs: Vec<f64> = likelihoods.iter().map(|p| p.ln()).collect();
    update_log_weights(prev, &logs, step)
}

/// `log Σ_i w_i N(z; z_pred_i, P_z_i)`; `-inf` when every component vanishes.
pub fn predictive_log_likelihood(
    weights: &[f64],
    z_pred: &[DVector<f64>],
    p_z: &[DMatrix<f64>],
    z: &DVector<f64>,
) -> f64 {
    let terms: Vec<f64> = weights
        .iter()
        .zip(z_pred.iter().zip(p_z))
        .map(|(w, (m, s))| {
            if *w <= 0.0 {
                return f64::NEG_INFINITY;
            }
            match gaussian_log_density(z, m, s, 0.0) {
                Ok(l) => w.ln() + l,
                Err(_) => f64::NEG_INFINITY,
            }
        })
        .collect();
    log_sum_exp(&terms)
}

fn failure(step: usize, err: &Error) -> FilterFailure {
    let kind = match err {
        Error::Model(_) | Error::Simulation { .. } => FailureKind::Model,
        Error::Degenerate { .. } => FailureKind::Degenerate,
        Error::FilterCollapse { .. } => FailureKind::Collapse,
        _ => FailureKind::Other,
    };
    FilterFailure {
        step,
        kind,
        message: err.to_string(),
    }
}

struct Updated {
    log_lik: f64,
    x_tilde: DVector<f64>,
    p_post: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
fn step_particle<M: StateSpaceModel + ?Sized>(
    model: &M,
    particle: &Particle,
    u: &[f64],
    z: &DVector<f64>,
    theta: &[f64],
    noise: &NoiseSpec,
    dt: f64,
    cfg: &LikelihoodConfig,
) -> Result<Updated> {
    let (x_pred, p_pred) = predict_particle(model, particle, u, theta, &noise.q, dt, &cfg.ut, cfg.jitter)?;
    let (z_pred, p_z, p_xz) = predict_measurement(model, &x_pred, &p_pred, u, theta, &noise.r, &cfg.ut, cfg.jitter)?;
    let log_lik = gaussian_log_density(z, &z_pred, &p_z, 0.0)?;
    let (x_tilde, p_post) = kalman_update_particle(&x_pred, &p_pred, &z_pred, &p_z, &p_xz, z)?;
    Ok(Updated {
        log_lik,
        x_tilde,
        p_post,
    })
}

/// Runs the filter over `dataset` and returns the per-step predictive
/// log-likelihoods `log p(z_k | z_{1:k-1})`.
///
/// `inspect` sees the ensemble after every completed step (post-resampling).
#[allow(clippy::too_many_arguments)]
pub fn uipf_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    dataset: &Dataset,
    noise: &NoiseSpec,
    cfg: &LikelihoodConfig,
    seed: u64,
    inspect: &mut dyn FnMut(&ParticleEnsemble),
) -> std::result::Result<Vec<f64>, FilterFailure> {
    if let Err(e) = model.check_params(theta) {
        return Err(failure(0, &e.into()));
    }
    cfg.validate().map_err(|e| failure(0, &e))?;
    cfg.ut.validate(model.state_dim()).map_err(|e| failure(0, &e))?;

    let mut rng = rng_from_seed(seed);
    let m0 = DVector::from_vec(model.initial_state(&dataset.inputs()[0], theta));
    let p0 = model
        .initial_covariance()
        .unwrap_or_else(|| DMatrix::identity(m0.len(), m0.len()) * cfg.init_cov);
    let mut ens = ParticleEnsemble::uniform(cfg.particles, m0, p0);
    let mut terms = Vec::with_capacity(dataset.len());

    for (k, (u, z)) in dataset.inputs().iter().zip(dataset.measurements()).enumerate() {
        let step = k + 1;
        let z = DVector::from_column_slice(z);
        let mut log_lik = vec![f64::NEG_INFINITY; ens.particles.len()];
        let mut updated: Vec<Option<Updated>> = Vec::with_capacity(ens.particles.len());
        let mut first_error = None;
        for (i, p) in ens.particles.iter().enumerate() {
            if ens.weights[i] == 0.0 {
                updated.push(None);
                continue;
            }
            match step_particle(model, p, u, &z, theta, noise, dataset.dt(), cfg) {
                Ok(up) if up.log_lik.is_finite() => {
                    log_lik[i] = up.log_lik;
                    updated.push(Some(up));
                }
                Ok(_) => updated.push(None),
                Err(e) => {
                    first_error.get_or_insert(e);
                    updated.push(None);
                }
            }
        }

        let mixture: Vec<f64> = ens
            .weights
            .iter()
            .zip(&log_lik)
            .map(|(w, l)| if *w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY })
            .collect();
        let term = log_sum_exp(&mixture);
        if !term.is_finite() {
            let err = first_error.unwrap_or(Error::FilterCollapse { step });
            return Err(failure(step, &err));
        }
        terms.push(term);

        for (i, up) in updated.into_iter().enumerate() {
            let Some(up) = up else { continue };
            let mut x = implicit_sample(&up.x_tilde, &up.p_post, cfg.alpha_implicit, &mut rng, cfg.jitter)
                .map_err(|e| failure(step, &e))?;
            model.constrain(x.as_mut_slice());
            ens.particles[i] = Particle {
                mean: x,
                cov: up.p_post,
            };
        }
        ens.weights = update_log_weights(&ens.weights, &log_lik, step).map_err(|e| failure(step, &e))?;
        ens.step = step;
        resample(&mut ens, cfg.ess_fraction, &mut rng);
        inspect(&ens);
    }
    Ok(terms)
}

/// `L(θ) = Σ_k log p(z_k | z_{1:k-1})` by the unscented implicit particle
/// filter. Infeasible parameters and filter failures yield `-inf` with the
/// failure recorded.
pub fn uipf_log_likelihood<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    dataset: &Dataset,
    noise: &NoiseSpec,
    cfg: &LikelihoodConfig,
    seed: u64,
) -> LikelihoodEval {
    match uipf_filter(model, theta, dataset, noise, cfg, seed, &mut |_| {}) {
        Ok(terms) => LikelihoodEval::finite(terms.iter().sum()),
        Err(f) => LikelihoodEval::failed(f),
    }
}
