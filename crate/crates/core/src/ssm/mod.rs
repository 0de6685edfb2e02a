//! Generic discrete-time nonlinear state-space models.
//!
//! A model is the pair of deterministic maps
//!
//! ```text
//! x_k = f(x_{k-1}, u_k, θ) + w_k,   w_k ~ N(0, Q)
//! z_k = h(x_k,     u_k, θ) + v_k,   v_k ~ N(0, R)
//! ```
//!
//! Row `k` of a dataset carries `(u_k, z_k)`; the input `u_k` is held over
//! the interval that ends at sample `k`, so the first transition from the
//! prior state `x_0` uses `u_1`.

mod dataset;
mod noise;
mod rk4;
mod simulate;
mod space;

pub use dataset::Dataset;
pub use noise::NoiseSpec;
pub use rk4::{rk4_step, rk4_step_into};
pub use simulate::{simulate, Trajectory};
pub use space::{ParameterPoint, ParameterSpace};

use nalgebra::DMatrix;

use crate::error::ModelError;

/// The deterministic part `(f, h)` of a state-space model.
///
/// Implementations must be pure: the same arguments always give the same
/// output, and evaluations may run concurrently from many threads.
pub trait StateSpaceModel: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;

    /// `out = f(x, u, θ)` over one sampling interval of length `dt`.
    fn transition(&self, x: &[f64], u: &[f64], theta: &[f64], dt: f64, out: &mut [f64]) -> Result<(), ModelError>;

    /// `out = h(x, u, θ)`.
    fn measurement(&self, x: &[f64], u: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError>;

    /// Mean of the prior `p(x_0)` for a dataset whose first input is `u_first`.
    fn initial_state(&self, u_first: &[f64], theta: &[f64]) -> Vec<f64>;

    /// Prior covariance override; `None` defers to the filter configuration.
    fn initial_covariance(&self) -> Option<DMatrix<f64>> {
        None
    }

    /// Projects a state back onto the model's admissible set after noise
    /// injection. Returns `true` when any component was saturated.
    fn constrain(&self, _x: &mut [f64]) -> bool {
        false
    }

    /// Rejects parameter vectors the model cannot be evaluated at.
    fn check_params(&self, _theta: &[f64]) -> Result<(), ModelError> {
        Ok(())
    }
}

impl<M: StateSpaceModel + ?Sized> StateSpaceModel for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn meas_dim(&self) -> usize {
        (**self).meas_dim()
    }
    fn transition(&self, x: &[f64], u: &[f64], theta: &[f64], dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        (**self).transition(x, u, theta, dt, out)
    }
    fn measurement(&self, x: &[f64], u: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        (**self).measurement(x, u, theta, out)
    }
    fn initial_state(&self, u_first: &[f64], theta: &[f64]) -> Vec<f64> {
        (**self).initial_state(u_first, theta)
    }
    fn initial_covariance(&self) -> Option<DMatrix<f64>> {
        (**self).initial_covariance()
    }
    fn constrain(&self, x: &mut [f64]) -> bool {
        (**self).constrain(x)
    }
    fn check_params(&self, theta: &[f64]) -> Result<(), ModelError> {
        (**self).check_params(theta)
    }
}
