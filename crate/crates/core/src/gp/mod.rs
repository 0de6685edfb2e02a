//! Gaussian-process surrogate of the log-likelihood surface.
//!
//! Inputs live in the unit cube of the normalized parameter space. Targets
//! are standardized before training, and non-finite observations never
//! reach the GP.

mod acquisition;
mod fit;
mod kernel;

pub use acquisition::{expected_improvement, expected_improvement_from, maximize_acquisition, shifted_halton};
pub use fit::{GpConfig, GpState, Hyper};
pub use kernel::{Kernel, KernelFamily};

/// Indices of the observations used for training, in ascending order.
///
/// Only finite values qualify. When more than `cap` remain, the best
/// `ceil(cap / 2)` are kept and the rest of the budget goes to the most
/// recent observations.
pub fn training_indices(values: &[f64], cap: usize) -> Vec<usize> {
    let finite: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    if finite.len() <= cap {
        return finite;
    }
    let mut ranked = finite.clone();
    ranked.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut keep = vec![false; values.len()];
    let n_best = cap.div_ceil(2);
    for &i in &ranked[..n_best] {
        keep[i] = true;
    }
    let mut remaining = cap - n_best;
    for &i in finite.iter().rev() {
        if remaining == 0 {
            break;
        }
        if !keep[i] {
            keep[i] = true;
            remaining -= 1;
        }
    }
    (0..values.len()).filter(|&i| keep[i]).collect()
}
