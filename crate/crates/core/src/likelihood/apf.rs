//! Auxiliary particle filter, used as the baseline likelihood estimator.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::resample::systematic_indices;
use super::{FailureKind, FilterFailure, LikelihoodEval};
use crate::error::Error;
use crate::linalg::{gaussian_log_density_chol, jittered_cholesky, log_sum_exp};
use crate::rng::{rng_from_seed, Rng};
use crate::ssm::{Dataset, NoiseSpec, StateSpaceModel};

fn fail(step: usize, kind: FailureKind, message: impl Into<String>) -> FilterFailure {
    FilterFailure {
        step,
        kind,
        message: message.into(),
    }
}

fn gaussian_draw(rng: &mut Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Per-step log-likelihood estimates of the fully adapted-in-mean auxiliary
/// particle filter with `particles` particles.
///
/// The first stage weights particles by `N(z_k; h(f(x)), R)`, ancestors are
/// drawn systematically, and the second stage corrects by
/// `p(z_k | x_k) / p(z_k | f(x_{k-1}))`.
pub fn apf_filter<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    dataset: &Dataset,
    noise: &NoiseSpec,
    particles: usize,
    init_cov: f64,
    seed: u64,
) -> std::result::Result<Vec<f64>, FilterFailure> {
    if particles == 0 {
        return Err(fail(0, FailureKind::Other, "particle count must be positive"));
    }
    if let Err(e) = model.check_params(theta) {
        return Err(fail(0, FailureKind::Model, Error::from(e).to_string()));
    }
    let nx = model.state_dim();
    let nz = model.meas_dim();
    let dt = dataset.dt();
    let mut rng = rng_from_seed(seed);
    let chol_r = jittered_cholesky(&noise.r, 0.0, "measurement noise")
        .map_err(|e| fail(0, FailureKind::Degenerate, e.to_string()))?;
    let l_q = if noise.has_process_noise() {
        Some(
            jittered_cholesky(&noise.q, 1e-12, "process noise")
                .map_err(|e| fail(0, FailureKind::Degenerate, e.to_string()))?
                .l(),
        )
    } else {
        None
    };

    let m0 = DVector::from_vec(model.initial_state(&dataset.inputs()[0], theta));
    let p0 = model
        .initial_covariance()
        .unwrap_or_else(|| DMatrix::identity(nx, nx) * init_cov);
    let l0 = jittered_cholesky(&p0, 1e-10, "initial covariance")
        .map_err(|e| fail(0, FailureKind::Degenerate, e.to_string()))?
        .l();
    let mut xs: Vec<DVector<f64>> = (0..particles)
        .map(|_| {
            let mut x = &m0 + &l0 * gaussian_draw(&mut rng, nx);
            model.constrain(x.as_mut_slice());
            x
        })
        .collect();
    let mut log_w = vec![-(particles as f64).ln(); particles];

    let ln_n = (particles as f64).ln();
    let mut terms = Vec::with_capacity(dataset.len());
    let mut mu = vec![DVector::zeros(nx); particles];
    let mut zbuf = vec![0.0; nz];

    for (k, (u, z)) in dataset.inputs().iter().zip(dataset.measurements()).enumerate() {
        let step = k + 1;
        let z = DVector::from_column_slice(z);
        let mut first_error = None;

        // First stage: look-ahead weights at the deterministic prediction.
        let mut first_ll = vec![f64::NEG_INFINITY; particles];
        let mut lambda = vec![f64::NEG_INFINITY; particles];
        for i in 0..particles {
            if log_w[i] == f64::NEG_INFINITY {
                continue;
            }
            let r = model
                .transition(xs[i].as_slice(), u, theta, dt, mu[i].as_mut_slice())
                .and_then(|_| model.measurement(mu[i].as_slice(), u, theta, &mut zbuf));
            match r {
                Ok(()) if zbuf.iter().all(|v| v.is_finite()) => {
                    let ll = gaussian_log_density_chol(&z, &DVector::from_column_slice(&zbuf), &chol_r);
                    first_ll[i] = ll;
                    lambda[i] = log_w[i] + ll;
                }
                Ok(()) => {}
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        let log_lambda = log_sum_exp(&lambda);
        if !log_lambda.is_finite() {
            return Err(match first_error {
                Some(e) => fail(step, FailureKind::Model, Error::from(e).to_string()),
                None => fail(step, FailureKind::Collapse, Error::FilterCollapse { step }.to_string()),
            });
        }
        let probs: Vec<f64> = lambda.iter().map(|l| (l - log_lambda).exp()).collect();
        let ancestors = systematic_indices(&probs, particles, &mut rng);

        // Propagate and apply the second-stage correction.
        let mut next = Vec::with_capacity(particles);
        let mut second = vec![f64::NEG_INFINITY; particles];
        for (j, &a) in ancestors.iter().enumerate() {
            let mut x = mu[a].clone();
            if let Some(l) = &l_q {
                x += l * gaussian_draw(&mut rng, nx);
            }
            model.constrain(x.as_mut_slice());
            match model.measurement(x.as_slice(), u, theta, &mut zbuf) {
                Ok(()) if zbuf.iter().all(|v| v.is_finite()) => {
                    let ll = gaussian_log_density_chol(&z, &DVector::from_column_slice(&zbuf), &chol_r);
                    second[j] = ll - first_ll[a];
                }
                Ok(()) => {}
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
            next.push(x);
        }
        let log_second = log_sum_exp(&second);
        if !log_second.is_finite() {
            let message = match first_error {
                Some(e) => Error::from(e).to_string(),
                None => Error::FilterCollapse { step }.to_string(),
            };
            return Err(fail(step, FailureKind::Collapse, message));
        }
        terms.push(log_lambda + log_second - ln_n);
        xs = next;
        log_w = second.iter().map(|s| s - log_second).collect();
    }
    Ok(terms)
}

/// Auxiliary-particle-filter estimate of `L(θ)`; failures yield `-inf`.
pub fn apf_log_likelihood<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &[f64],
    dataset: &Dataset,
    noise: &NoiseSpec,
    particles: usize,
    init_cov: f64,
    seed: u64,
) -> LikelihoodEval {
    match apf_filter(model, theta, dataset, noise, particles, init_cov, seed) {
        Ok(terms) => LikelihoodEval::finite(terms.iter().sum()),
        Err(f) => LikelihoodEval::failed(f),
    }
}
