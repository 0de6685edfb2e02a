use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parameter vector θ in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterPoint(pub Vec<f64>);

impl Deref for ParameterPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterPoint {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Named box `[lower, upper]` over which θ is searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    units: Vec<String>,
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>, units: Vec<String>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Config("parameter space is empty".into()));
        }
        if lower.len() != n || upper.len() != n || units.len() != n {
            return Err(Error::Config(
                "parameter names, bounds and units must share one length".into(),
            ));
        }
        for i in 0..n {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::Config(format!(
                    "parameter `{}` needs finite bounds with lower < upper",
                    names[i]
                )));
            }
        }
        Ok(Self {
            names,
            lower,
            upper,
            units,
        })
    }

    /// The unit cube `[0, 1]^n` with generated names.
    pub fn unit(n: usize) -> Self {
        Self {
            names: (1..=n).map(|i| format!("x{i}")).collect(),
            lower: vec![0.0; n],
            upper: vec![1.0; n],
            units: vec![String::new(); n],
        }
    }

    /// A box from `(lower, upper)` pairs with generated names.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let n = bounds.len();
        Self::new(
            (1..=n).map(|i| format!("theta_{i}")).collect(),
            bounds.iter().map(|b| b.0).collect(),
            bounds.iter().map(|b| b.1).collect(),
            vec![String::new(); n],
        )
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (i, v) in theta.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Physical θ → unit-cube coordinates.
    pub fn normalize(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    /// Unit-cube coordinates → physical θ.
    pub fn denormalize(&self, unit: &[f64]) -> ParameterPoint {
        ParameterPoint(
            unit.iter()
                .enumerate()
                .map(|(i, v)| self.lower[i] + v * self.width(i))
                .collect(),
        )
    }
}
