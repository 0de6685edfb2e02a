use rand::Rng as _;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::fit::{GpConfig, GpState};
use crate::nelder_mead::{nm_run, NelderMeadConfig, NmStop, Simplex};
use crate::rng::rng_from_seed;
use crate::ssm::ParameterSpace;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form `E[(f - L*)^+]` for `f ~ N(mu, sigma^2)`.
pub fn expected_improvement_from(mu: f64, sigma: f64, l_star: f64) -> f64 {
    let diff = mu - l_star;
    if !(sigma > 0.0) {
        return diff.max(0.0);
    }
    let z = diff / sigma;
    let ei = diff * std_normal_cdf(z) + sigma * INV_SQRT_2PI * (-0.5 * z * z).exp();
    ei.max(0.0)
}

/// Expected improvement of the GP posterior at `theta` over `l_star`.
pub fn expected_improvement(gp: &GpState, theta: &[f64], l_star: f64) -> f64 {
    let (mu, sigma) = gp.predict(theta);
    expected_improvement_from(mu, sigma, l_star)
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes
            .iter()
            .take_while(|p| *p * *p <= c)
            .all(|p| !c.is_multiple_of(*p))
        {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` Halton points in `[0, 1)^dim`, randomly shifted modulo 1.
pub fn shifted_halton(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    let mut rng = rng_from_seed(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            primes
                .iter()
                .zip(&shift)
                .map(|(p, s)| (radical_inverse(i, *p) + s).fract())
                .collect()
        })
        .collect()
}

/// Maximizes expected improvement over the unit cube.
///
/// Every quasi-random start is polished by a bounded Nelder–Mead search; the
/// best point found is returned with its EI value.
pub fn maximize_acquisition(gp: &GpState, l_star: f64, cfg: &GpConfig, seed: u64) -> (Vec<f64>, f64) {
    let dim = gp.dim();
    let space = ParameterSpace::unit(dim);
    let ei = |x: &[f64]| expected_improvement(gp, x, l_star);
    let nm_cfg = NelderMeadConfig::default();
    let stop = NmStop {
        d_lim: 1e-6,
        patience: 2 * (dim + 1),
        max_evals: cfg.acq_polish_evals,
    };
    let polish = |start: Vec<f64>| -> Vec<(Vec<f64>, f64)> {
        let v0 = ei(&start);
        let mut found = vec![(start.clone(), v0)];
        if cfg.acq_polish_evals == 0 {
            return found;
        }
        let mut points = vec![start.clone()];
        for i in 0..dim {
            let mut p = start.clone();
            p[i] += if p[i] + 0.05 <= 1.0 { 0.05 } else { -0.05 };
            points.push(p);
        }
        let Ok(simplex) = Simplex::from_points(points, ei) else {
            return found;
        };
        let mut f = |x: &[f64]| Some(ei(x));
        if let Ok(run) = nm_run(&mut f, simplex, &stop, &space, &nm_cfg) {
            found.push((run.best.theta, run.best.value));
        }
        found
    };
    let candidates: Vec<Vec<(Vec<f64>, f64)>> = shifted_halton(cfg.acq_starts, dim, seed)
        .into_par_iter()
        .map(polish)
        .collect();
    // Reduce in start order so the result does not depend on scheduling.
    let mut best: (Vec<f64>, f64) = (vec![0.5; dim], f64::NEG_INFINITY);
    for (x, v) in candidates.into_iter().flatten() {
        if v > best.1 {
            best = (x, v);
        }
    }
    let mut x = best.0;
    space.clamp(&mut x);
    (x, best.1.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_cases() {
        assert_eq!(expected_improvement_from(1.0, 0.0, 2.0), 0.0);
        assert_eq!(expected_improvement_from(2.5, 0.0, 2.0), 0.5);
        assert!((expected_improvement_from(3.0, 1.0, 3.0) - INV_SQRT_2PI).abs() < 1e-15);
        assert!(expected_improvement_from(-50.0, 1.0, 0.0) >= 0.0);
    }

    #[test]
    fn halton_is_stratified_and_reproducible() {
        let a = shifted_halton(32, 3, 9);
        assert_eq!(a, shifted_halton(32, 3, 9));
        assert!(a.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        let unshifted: Vec<f64> = (1..=8).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(unshifted, vec![0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875, 0.0625]);
        assert_eq!(first_primes(6), vec![2, 3, 5, 7, 11, 13]);
    }
}
