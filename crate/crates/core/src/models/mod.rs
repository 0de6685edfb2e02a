//! Small reference models: fixed linear-Gaussian systems for filter checks,
//! a scalar AR(1) with its coefficient as the unknown, and a three-parameter
//! logistic-growth toy used for end-to-end identification runs.

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;
use crate::ssm::StateSpaceModel;

/// `x_k = A x_{k-1} + B u_k`, `z_k = C x_k`; θ is ignored.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, m0: DVector<f64>, p0: DMatrix<f64>) -> Self {
        let nx = a.nrows();
        Self {
            b: DMatrix::zeros(nx, 1),
            a,
            c,
            m0,
            p0,
        }
    }
}

impl StateSpaceModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn meas_dim(&self) -> usize {
        self.c.nrows()
    }
    fn transition(&self, x: &[f64], u: &[f64], _theta: &[f64], _dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        let y = &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u);
        out.copy_from_slice(y.as_slice());
        Ok(())
    }
    fn measurement(&self, x: &[f64], _u: &[f64], _theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        let y = &self.c * DVector::from_column_slice(x);
        out.copy_from_slice(y.as_slice());
        Ok(())
    }
    fn initial_state(&self, _u: &[f64], _theta: &[f64]) -> Vec<f64> {
        self.m0.as_slice().to_vec()
    }
    fn initial_covariance(&self) -> Option<DMatrix<f64>> {
        Some(self.p0.clone())
    }
}

/// Scalar `x_k = a x_{k-1} + u_k`, `z_k = x_k` with θ = `[a]`.
#[derive(Debug, Clone)]
pub struct ScalarAr1 {
    pub m0: f64,
    pub p0: f64,
}

impl StateSpaceModel for ScalarAr1 {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn meas_dim(&self) -> usize {
        1
    }
    fn transition(&self, x: &[f64], u: &[f64], theta: &[f64], _dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        out[0] = theta[0] * x[0] + u[0];
        Ok(())
    }
    fn measurement(&self, x: &[f64], _u: &[f64], _theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        out[0] = x[0];
        Ok(())
    }
    fn initial_state(&self, _u: &[f64], _theta: &[f64]) -> Vec<f64> {
        vec![self.m0]
    }
    fn initial_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.p0))
    }
    fn check_params(&self, theta: &[f64]) -> Result<(), ModelError> {
        check_len(theta, 1)
    }
}

/// Logistic-map style growth driven by an input:
///
/// `x_k = r x_{k-1} (1 - x_{k-1} / K) + b u_k`, `z_k = x_k`, θ = `[r, K, b]`.
#[derive(Debug, Clone)]
pub struct LogisticGrowth {
    pub x0: f64,
    pub p0: f64,
}

impl Default for LogisticGrowth {
    fn default() -> Self {
        Self { x0: 0.5, p0: 1e-4 }
    }
}

impl StateSpaceModel for LogisticGrowth {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn meas_dim(&self) -> usize {
        1
    }
    fn transition(&self, x: &[f64], u: &[f64], theta: &[f64], _dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        let (r, k, b) = (theta[0], theta[1], theta[2]);
        out[0] = r * x[0] * (1.0 - x[0] / k) + b * u[0];
        if !out[0].is_finite() {
            return Err(ModelError::NonFinite { component: 0 });
        }
        Ok(())
    }
    fn measurement(&self, x: &[f64], _u: &[f64], _theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        out[0] = x[0];
        Ok(())
    }
    fn initial_state(&self, _u: &[f64], _theta: &[f64]) -> Vec<f64> {
        vec![self.x0]
    }
    fn initial_covariance(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.p0))
    }
    fn check_params(&self, theta: &[f64]) -> Result<(), ModelError> {
        check_len(theta, 3)?;
        if theta[1] <= 0.0 {
            return Err(ModelError::Domain {
                what: "carrying capacity",
                detail: format!("K = {} must be positive", theta[1]),
            });
        }
        Ok(())
    }
}

fn check_len(theta: &[f64], n: usize) -> Result<(), ModelError> {
    if theta.len() != n {
        return Err(ModelError::Dimension {
            what: "parameter vector",
            expected: n,
            got: theta.len(),
        });
    }
    Ok(())
}
