use rand::Rng;

use super::uipf::ParticleEnsemble;

/// Effective sample size `1 / Σ w²` of normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: ancestor indices for `n` offspring.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let step = 1.0 / n as f64;
    let start: f64 = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for j in 0..n {
        let pos = start + j as f64 * step;
        while pos > cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

/// Resamples `(mean, cov)` pairs when `ESS < ess_fraction · N_p`.
///
/// Returns whether resampling happened; weights are reset to `1 / N_p`.
pub fn resample<R: Rng + ?Sized>(ensemble: &mut ParticleEnsemble, ess_fraction: f64, rng: &mut R) -> bool {
    let n = ensemble.particles.len();
    if effective_sample_size(&ensemble.weights) >= ess_fraction * n as f64 {
        return false;
    }
    let idx = systematic_indices(&ensemble.weights, n, rng);
    ensemble.particles = idx.iter().map(|&i| ensemble.particles[i].clone()).collect();
    ensemble.weights = vec![1.0 / n as f64; n];
    true
}
