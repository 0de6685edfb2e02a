use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, jittered_cholesky};

/// Additive process (`Q`) and measurement (`R`) noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl NoiseSpec {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::Config("noise covariances must be square".into()));
        }
        if asymmetry(&q) > 1e-12 * q.amax().max(1.0) || asymmetry(&r) > 1e-12 * r.amax().max(1.0) {
            return Err(Error::Config("noise covariances must be symmetric".into()));
        }
        // R must be PD as given; Q only PSD (zero process noise is allowed).
        if r.clone().cholesky().is_none() {
            return Err(Error::Config("R must be positive definite".into()));
        }
        if q.trace() > 0.0 {
            jittered_cholesky(&q, 1e-10, "process noise")
                .map_err(|_| Error::Config("Q must be positive semidefinite".into()))?;
        } else if q.iter().any(|v| *v != 0.0) {
            return Err(Error::Config("Q must be positive semidefinite".into()));
        }
        Ok(Self { q, r })
    }

    /// Diagonal `Q` and `R`.
    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn has_process_noise(&self) -> bool {
        self.q.iter().any(|v| *v != 0.0)
    }
}
