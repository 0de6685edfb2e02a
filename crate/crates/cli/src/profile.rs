//! Current profiles for synthetic datasets.

use rand_distr::{Distribution, StandardNormal};
use sysid_core::rng::rng_from_seed;

use crate::config::ProfileSpec;

/// Number of samples a profile spans at sampling interval `dt`.
pub fn profile_steps(spec: &ProfileSpec, dt: f64) -> usize {
    ((spec.duration() / dt).round() as usize).max(1)
}

/// Discharge C-rate per step, non-negative (positive means discharge).
///
/// `fallback_seed` drives a random walk whose spec carries no seed.
pub fn c_rate_sequence(spec: &ProfileSpec, dt: f64, fallback_seed: u64) -> Vec<f64> {
    let steps = profile_steps(spec, dt);
    match *spec {
        ProfileSpec::ConstantCrate { c_rate, .. } => vec![c_rate; steps],
        ProfileSpec::RandomWalk {
            c_rate_min: lo,
            c_rate_max: hi,
            seed,
            step,
            smoothing,
            ..
        } => {
            let mut rng = rng_from_seed(seed.unwrap_or(fallback_seed));
            // Start mid-range so the walk explores both bounds.
            let mut walk = 0.5 * (lo + hi);
            let mut smooth = walk;
            (0..steps)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    walk = (walk + step * z).clamp(lo, hi);
                    smooth = smoothing * smooth + (1.0 - smoothing) * walk;
                    smooth.clamp(lo, hi)
                })
                .collect()
        }
    }
}

/// Cell current in amperes for a discharge C-rate; discharge is negative.
pub fn c_rate_to_current(c_rate: f64, capacity_ah: f64) -> f64 {
    -c_rate * capacity_ah
}
