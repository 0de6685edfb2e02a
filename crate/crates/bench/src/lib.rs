//! Shared fixtures for the benchmarks.

use sysid_core::battx::{BattXConfig, BattXModel, BattXParams};
use sysid_core::ssm::simulate;
use sysid_core::{Dataset, NoiseSpec, StateSpaceModel};

/// A BattX chain of length 5 with a noisy 3 C discharge of `steps` samples.
pub fn battx_fixture(steps: usize) -> (BattXModel, Vec<f64>, Dataset, NoiseSpec) {
    let model = BattXModel::new(BattXConfig::uniform(5)).expect("default config is valid");
    let theta = BattXParams::nominal().to_vec();
    let noise = NoiseSpec::diagonal(&[1e-8; 10], &[1e-3, 1e-2]).expect("diagonal noise is valid");
    let inputs = vec![vec![-7.5, 303.0]; steps];
    let x0 = model.initial_state(&inputs[0], &theta);
    let traj = simulate(&model, &x0, &inputs, &theta, 1.0, Some(&noise), Some(1)).expect("nominal run is finite");
    let ds = Dataset::new(inputs, traj.measurements, 1.0, "bench").expect("well-formed dataset");
    (model, theta, ds, noise)
}

/// Concave quadratic on the unit cube with its maximum at `0.3 + 0.1 i`.
pub fn quadratic(theta: &[f64]) -> f64 {
    -theta
        .iter()
        .enumerate()
        .map(|(i, t)| (1.0 + i as f64) * (t - 0.3 - 0.1 * i as f64).powi(2))
        .sum::<f64>()
}
