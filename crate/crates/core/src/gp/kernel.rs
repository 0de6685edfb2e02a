use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Matern52,
    SquaredExponential,
}

/// Stationary ARD kernel over normalized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub signal_var: f64,
    pub lengthscales: Vec<f64>,
}

impl Kernel {
    pub fn new(family: KernelFamily, signal_var: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let k = Self {
            family,
            signal_var,
            lengthscales,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.signal_var > 0.0
            && self.signal_var.is_finite()
            && !self.lengthscales.is_empty()
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite());
        if !ok {
            return Err(Error::Config(format!(
                "kernel hyperparameters must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Scaled squared distance `Σ ((a_j - b_j) / ℓ_j)^2`.
    pub fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum()
    }

    /// Kernel value as a function of the scaled squared distance.
    pub fn from_sq_dist(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => self.signal_var * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                self.signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.from_sq_dist(self.scaled_sq_dist(a, b))
    }

    /// The factor `g` with `∂k/∂log ℓ_j = g · (Δ_j/ℓ_j)^2`.
    pub(crate) fn lengthscale_factor(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => self.signal_var * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                5.0 / 3.0 * self.signal_var * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
        }
    }
}
