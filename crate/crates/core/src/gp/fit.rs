use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelFamily};
use crate::error::{Error, Result};
use crate::linalg::{jittered_cholesky, LN_2PI};
use crate::rng::rng_from_seed;

/// Surrogate, training-schedule and acquisition settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub kernel: KernelFamily,
    /// Random hyperparameter starts in addition to the default and warm starts.
    pub restarts: usize,
    /// Iteration cap of each local hyperparameter search.
    pub max_iters: usize,
    /// Lower bound on the (standardized) observation-noise variance.
    pub noise_floor: f64,
    pub lengthscale_bounds: (f64, f64),
    pub signal_var_bounds: (f64, f64),
    pub noise_var_max: f64,
    /// Retrain hyperparameters every BO iteration while the pool is at most this large.
    pub refit_full_until: usize,
    /// Beyond that, retrain every this many BO iterations.
    pub refit_every: usize,
    /// Largest training set; larger pools keep their best half and most recent points.
    pub max_train_points: usize,
    /// Quasi-random starts for expected-improvement maximization.
    pub acq_starts: usize,
    /// Evaluation cap of each local polish of expected improvement.
    pub acq_polish_evals: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Matern52,
            restarts: 2,
            max_iters: 50,
            noise_floor: 1e-8,
            lengthscale_bounds: (1e-2, 20.0),
            signal_var_bounds: (1e-2, 1e2),
            noise_var_max: 1.0,
            refit_full_until: 100,
            refit_every: 5,
            max_train_points: 200,
            acq_starts: 32,
            acq_polish_evals: 100,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let (l0, l1) = self.lengthscale_bounds;
        let (s0, s1) = self.signal_var_bounds;
        let ok = l0 > 0.0
            && l0 < l1
            && s0 > 0.0
            && s0 < s1
            && self.noise_floor > 0.0
            && self.noise_floor < self.noise_var_max
            && self.refit_every >= 1
            && self.max_train_points >= 2
            && self.acq_starts >= 1;
        if !ok {
            return Err(Error::Config(format!("invalid GP settings: {self:?}")));
        }
        Ok(())
    }
}

/// Log-scale hyperparameters: `[log σ², log ℓ_1..log ℓ_d, log σ_n²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper(pub Vec<f64>);

impl Hyper {
    fn dim(&self) -> usize {
        self.0.len() - 2
    }

    pub fn kernel(&self, family: KernelFamily) -> Kernel {
        Kernel {
            family,
            signal_var: self.0[0].exp(),
            lengthscales: self.0[1..=self.dim()].iter().map(|v| v.exp()).collect(),
        }
    }

    pub fn noise_var(&self) -> f64 {
        self.0[self.0.len() - 1].exp()
    }
}

/// A conditioned Gaussian process over normalized inputs.
///
/// Targets are standardized internally; the prior mean is the mean of the
/// training targets.
#[derive(Debug, Clone)]
pub struct GpState {
    pub kernel: Kernel,
    /// Observation-noise variance in standardized units.
    pub noise_var: f64,
    pub y_mean: f64,
    pub y_scale: f64,
    x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal: f64,
}

fn standardize(y: &[f64]) -> (f64, f64, bool) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = var.sqrt();
    if scale <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0, true)
    } else {
        (mean, scale, false)
    }
}

fn check_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Config(format!(
            "GP needs at least two matching inputs and targets, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|p| p.len() != d) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("GP training data must be finite and rectangular".into()));
    }
    Ok(d)
}

impl GpState {
    /// Conditions on `(x, y)` with fixed hyperparameters.
    pub fn condition(x: &[Vec<f64>], y: &[f64], kernel: Kernel, noise_var: f64) -> Result<Self> {
        let d = check_data(x, y)?;
        kernel.validate()?;
        if kernel.lengthscales.len() != d || !(noise_var >= 0.0) {
            return Err(Error::Config("kernel dimension or noise variance is invalid".into()));
        }
        let (y_mean, y_scale, _) = standardize(y);
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));
        let n = x.len();
        let mut k = DMatrix::from_fn(n, n, |a, b| kernel.eval(&x[a], &x[b]));
        for i in 0..n {
            k[(i, i)] += noise_var;
        }
        let chol = jittered_cholesky(&k, 0.0, "GP kernel matrix")?;
        let alpha = chol.solve(&ys);
        let log_marginal = log_marginal_from(&chol, &ys, &alpha);
        Ok(Self {
            kernel,
            noise_var,
            y_mean,
            y_scale,
            x: x.to_vec(),
            chol,
            alpha,
            log_marginal,
        })
    }

    /// Trains hyperparameters by multi-start projected gradient ascent on the
    /// log marginal likelihood, then conditions on the data.
    ///
    /// `warm` adds the given hyperparameters as an extra start. Constant
    /// targets skip training and keep the default hyperparameters.
    pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig, warm: Option<&Hyper>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = check_data(x, y)?;
        let bounds = hyper_bounds(cfg, d);
        let default = default_hyper(d, &bounds);
        let (y_mean, y_scale, flat) = standardize(y);
        if flat {
            return Self::condition(x, y, default.kernel(cfg.kernel), default.noise_var());
        }
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let problem = LmlProblem::new(x, &ys, cfg.kernel);

        let mut starts = vec![default];
        if let Some(w) = warm.filter(|w| w.0.len() == d + 2) {
            starts.push(Hyper(clamp_to(&w.0, &bounds)));
        }
        let mut rng = rng_from_seed(seed);
        for _ in 0..cfg.restarts {
            let mut h = Vec::with_capacity(d + 2);
            h.push(rng.random_range(0.2f64.ln()..5.0f64.ln()));
            for _ in 0..d {
                h.push(rng.random_range(0.05f64.ln()..2.0f64.ln()));
            }
            h.push(rng.random_range(1e-6f64.ln()..1e-1f64.ln()));
            starts.push(Hyper(clamp_to(&h, &bounds)));
        }

        let results: Vec<Option<(f64, Vec<f64>)>> = starts
            .into_par_iter()
            .map(|s| ascend(&problem, s.0, &bounds, cfg.max_iters))
            .collect();
        // Reduce in start order so the winner does not depend on scheduling.
        let mut best: Option<(f64, Hyper)> = None;
        for (f, h) in results.into_iter().flatten() {
            if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
                best = Some((f, Hyper(h)));
            }
        }
        let (_, h) = best.ok_or(Error::Degenerate {
            context: "GP hyperparameter training",
        })?;
        Self::condition(x, y, h.kernel(cfg.kernel), h.noise_var())
    }

    pub fn hyper(&self) -> Hyper {
        let mut h = vec![self.kernel.signal_var.ln()];
        h.extend(self.kernel.lengthscales.iter().map(|l| l.ln()));
        h.push(self.noise_var.ln());
        Hyper(h)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.kernel.lengthscales.len()
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior mean and standard deviation of the latent function at `theta`.
    pub fn predict(&self, theta: &[f64]) -> (f64, f64) {
        let kbar = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.kernel.eval(theta, xi)));
        let mu = kbar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kbar)
            .expect("Cholesky factor has a non-zero diagonal");
        let var = (self.kernel.signal_var - v.norm_squared()).max(0.0);
        (self.y_mean + self.y_scale * mu, self.y_scale * var.sqrt())
    }
}

fn log_marginal_from(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let half_log_det: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.dot(alpha) - half_log_det - 0.5 * y.len() as f64 * LN_2PI
}

fn hyper_bounds(cfg: &GpConfig, d: usize) -> Vec<(f64, f64)> {
    let mut b = vec![(cfg.signal_var_bounds.0.ln(), cfg.signal_var_bounds.1.ln())];
    b.extend(std::iter::repeat_n(
        (cfg.lengthscale_bounds.0.ln(), cfg.lengthscale_bounds.1.ln()),
        d,
    ));
    b.push((cfg.noise_floor.ln(), cfg.noise_var_max.ln()));
    b
}

fn default_hyper(d: usize, bounds: &[(f64, f64)]) -> Hyper {
    let mut h = vec![0.0];
    h.extend(std::iter::repeat_n(0.3f64.ln(), d));
    h.push(1e-3f64.ln());
    Hyper(clamp_to(&h, bounds))
}

fn clamp_to(h: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    h.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
}

/// Log marginal likelihood and its gradient over log hyperparameters.
struct LmlProblem {
    y: DVector<f64>,
    /// Per-dimension squared differences, each an `n x n` row-major block.
    sq_diff: Vec<Vec<f64>>,
    family: KernelFamily,
    n: usize,
}

impl LmlProblem {
    fn new(x: &[Vec<f64>], y: &[f64], family: KernelFamily) -> Self {
        let n = x.len();
        let d = x[0].len();
        let sq_diff = (0..d)
            .map(|j| {
                let mut m = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        let t = x[a][j] - x[b][j];
                        m[a * n + b] = t * t;
                    }
                }
                m
            })
            .collect();
        Self {
            y: DVector::from_column_slice(y),
            sq_diff,
            family,
            n,
        }
    }

    fn value_and_grad(&self, h: &[f64]) -> Option<(f64, Vec<f64>)> {
        let hyper = Hyper(h.to_vec());
        let kernel = hyper.kernel(self.family);
        let noise = hyper.noise_var();
        let n = self.n;
        let d = kernel.lengthscales.len();
        let inv_l2: Vec<f64> = kernel.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();

        let mut r2 = vec![0.0; n * n];
        for (j, block) in self.sq_diff.iter().enumerate() {
            for (r, s) in r2.iter_mut().zip(block) {
                *r += s * inv_l2[j];
            }
        }
        let k0 = DMatrix::from_fn(n, n, |a, b| kernel.from_sq_dist(r2[a * n + b]));
        let mut k = k0.clone();
        for i in 0..n {
            k[(i, i)] += noise;
        }
        let chol = k.cholesky()?;
        let alpha = chol.solve(&self.y);
        let value = log_marginal_from(&chol, &self.y, &alpha);
        if !value.is_finite() {
            return None;
        }

        // W = α αᵀ - K⁻¹; ∂L/∂h = ½ Σ W ∘ ∂K/∂h.
        let mut w = chol.inverse();
        w.iter_mut().for_each(|v| *v = -*v);
        w.ger(1.0, &alpha, &alpha, 1.0);

        let mut grad = vec![0.0; d + 2];
        grad[0] = 0.5 * w.component_mul(&k0).sum();
        let factor: Vec<f64> = r2.iter().map(|r| kernel.lengthscale_factor(*r)).collect();
        for j in 0..d {
            let block = &self.sq_diff[j];
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += w[(a, b)] * factor[a * n + b] * block[a * n + b];
                }
            }
            grad[j + 1] = 0.5 * s * inv_l2[j];
        }
        grad[d + 1] = 0.5 * noise * w.trace();
        Some((value, grad))
    }
}

/// Projected gradient ascent with Barzilai–Borwein steps and Armijo backtracking.
fn ascend(problem: &LmlProblem, start: Vec<f64>, bounds: &[(f64, f64)], max_iters: usize) -> Option<(f64, Vec<f64>)> {
    let mut h = start;
    let (mut f, mut g) = problem.value_and_grad(&h)?;
    let ginf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = (0.5 / ginf.max(1e-12)).min(1.0);
    for _ in 0..max_iters {
        let projected: f64 = h
            .iter()
            .zip(&g)
            .zip(bounds)
            .map(|((hi, gi), (lo, up))| (hi + gi).clamp(*lo, *up) - hi)
            .map(|p| p * p)
            .sum::<f64>()
            .sqrt();
        if projected < 1e-6 {
            break;
        }
        let mut accepted = None;
        for _ in 0..30 {
            let cand = clamp_to(&h.iter().zip(&g).map(|(a, b)| a + step * b).collect::<Vec<_>>(), bounds);
            let dir: f64 = cand.iter().zip(&h).zip(&g).map(|((c, a), b)| (c - a) * b).sum();
            if let Some((fc, gc)) = problem.value_and_grad(&cand) {
                if fc >= f + 1e-4 * dir {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let s: Vec<f64> = cand.iter().zip(&h).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        step = if sy < 0.0 { ss / -sy } else { step * 2.0 };
        step = step.clamp(1e-8, 1e3);
        let gain = fc - f;
        h = cand;
        f = fc;
        g = gc;
        if ss.sqrt() < 1e-9 || gain.abs() < 1e-10 * f.abs().max(1.0) {
            break;
        }
    }
    Some((f, h))
}
