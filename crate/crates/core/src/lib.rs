//! Maximum-likelihood identification of nonlinear state-space models.
//!
//! The crate is organized bottom-up:
//!
//! - [`ssm`]: the model abstraction, RK4 discretization, datasets and simulation.
//! - [`battx`]: the BattX lithium-ion equivalent-circuit model.
//! - [`likelihood`]: log-likelihood evaluation with the unscented implicit
//!   particle filter, an auxiliary particle filter baseline and the
//!   deterministic-dynamics fast path.
//! - [`gp`]: Gaussian-process surrogate and expected improvement.
//! - [`nelder_mead`]: bounded simplex search.
//! - [`hybrid`]: the scheduler that alternates Nelder–Mead and Bayesian
//!   optimization over a shared observation pool.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battx;
pub mod error;
pub mod gp;
pub mod hybrid;
pub mod likelihood;
pub mod linalg;
pub mod models;
pub mod nelder_mead;
pub mod rng;
pub mod ssm;

pub use error::{Error, ModelError, Result};
pub use ssm::{Dataset, NoiseSpec, ParameterPoint, ParameterSpace, StateSpaceModel};
