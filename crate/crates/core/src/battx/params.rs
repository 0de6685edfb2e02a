use serde::{Deserialize, Serialize};

use super::ocv::OcvCurve;
use crate::error::{Error, ModelError, Result};
use crate::ssm::ParameterSpace;

pub const PARAM_COUNT: usize = 18;

/// Parameter names in vector order.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "C_s1", "R_s1", "C_e", "R_e", "C_core", "C_surf", "R_core", "R_surf", "beta1", "beta2", "gamma1", "gamma2",
    "gamma3", "kappa1", "kappa2", "c1", "c2", "c3",
];

pub const PARAM_UNITS: [&str; PARAM_COUNT] = [
    "F", "Ohm", "F", "Ohm", "J/K", "J/K", "K/W", "K/W", "V", "V", "Ohm", "Ohm", "Ohm", "K", "K", "V/K", "V/K", "V/K",
];

/// Nominal cell (Samsung INR18650-25R parameterization).
const NOMINAL: [f64; PARAM_COUNT] = [
    4521.0, 0.114, 3691.0, 0.007, 40.0, 10.0, 2.0, 3.0, 0.789, 0.317, 0.046, -0.035, 0.029, 30.0, 70.0, -0.0004, 0.002,
    -0.001,
];

/// Identification search box for synthetic studies.
const SEARCH_RANGE: [(f64, f64); PARAM_COUNT] = [
    (2000.0, 5000.0),
    (0.0, 0.5),
    (0.0, 5000.0),
    (0.0, 0.1),
    (0.0, 100.0),
    (0.0, 50.0),
    (0.0, 10.0),
    (0.0, 10.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 0.1),
    (-0.1, 0.0),
    (0.0, 0.1),
    (0.0, 100.0),
    (0.0, 100.0),
    (-0.001, 0.0),
    (0.0, 0.01),
    (-0.01, 0.0),
];

/// The 18 identifiable BattX parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BattXParams {
    pub c_s1: f64,
    pub r_s1: f64,
    pub c_e: f64,
    pub r_e: f64,
    pub c_core: f64,
    pub c_surf: f64,
    pub r_core: f64,
    pub r_surf: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl BattXParams {
    pub fn nominal() -> Self {
        Self::from_slice(&NOMINAL).expect("nominal vector has 18 entries")
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, ModelError> {
        if v.len() != PARAM_COUNT {
            return Err(ModelError::Dimension {
                what: "BattX parameter vector",
                expected: PARAM_COUNT,
                got: v.len(),
            });
        }
        Ok(Self {
            c_s1: v[0],
            r_s1: v[1],
            c_e: v[2],
            r_e: v[3],
            c_core: v[4],
            c_surf: v[5],
            r_core: v[6],
            r_surf: v[7],
            beta1: v[8],
            beta2: v[9],
            gamma1: v[10],
            gamma2: v[11],
            gamma3: v[12],
            kappa1: v[13],
            kappa2: v[14],
            c1: v[15],
            c2: v[16],
            c3: v[17],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.c_s1,
            self.r_s1,
            self.c_e,
            self.r_e,
            self.c_core,
            self.c_surf,
            self.r_core,
            self.r_surf,
            self.beta1,
            self.beta2,
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.kappa1,
            self.kappa2,
            self.c1,
            self.c2,
            self.c3,
        ]
    }

    /// Capacitances and resistances must be strictly positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("C_s1", self.c_s1),
            ("R_s1", self.r_s1),
            ("C_e", self.c_e),
            ("R_e", self.r_e),
            ("C_core", self.c_core),
            ("C_surf", self.c_surf),
            ("R_core", self.r_core),
            ("R_surf", self.r_surf),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::Domain {
                    what: "BattX parameter",
                    detail: format!("{name} = {v} must be positive"),
                });
            }
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Domain {
                what: "BattX parameter",
                detail: "non-finite entry".into(),
            });
        }
        Ok(())
    }

    /// Search box used by the synthetic identification study.
    pub fn search_space() -> ParameterSpace {
        ParameterSpace::new(
            PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
            SEARCH_RANGE.iter().map(|r| r.0).collect(),
            SEARCH_RANGE.iter().map(|r| r.1).collect(),
            PARAM_UNITS.iter().map(|s| s.to_string()).collect(),
        )
        .expect("built-in search range is valid")
    }
}

/// Structural settings of a BattX model that are not identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattXConfig {
    /// Electrode chain length `N`.
    pub chain_length: usize,
    /// Capacitance ratios `η_i`, `C_{s,i} = η_i C_{s,1}`; length `N`.
    pub eta: Vec<f64>,
    /// Resistance ratios `σ_i`, `R_{s,i} = σ_i R_{s,1}`; length `N - 1`.
    pub sigma_ratio: Vec<f64>,
    /// Arrhenius reference temperature in kelvin.
    pub t_ref: f64,
    pub ocv: OcvCurve,
    /// Initial state of charge of every electrode node.
    pub initial_soc: f64,
}

impl Default for BattXConfig {
    fn default() -> Self {
        Self::uniform(5)
    }
}

impl BattXConfig {
    /// Uniform chain of length `n` with the default OCV curve and `T_ref = 298 K`.
    pub fn uniform(n: usize) -> Self {
        Self {
            chain_length: n,
            eta: vec![1.0; n],
            sigma_ratio: vec![1.0; n.saturating_sub(1)],
            t_ref: 298.0,
            ocv: OcvCurve::default_synthetic(),
            initial_soc: 1.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.chain_length + 5
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.chain_length;
        if n < 2 {
            return Err(Error::Config("BattX chain length must be at least 2".into()));
        }
        if self.eta.len() != n || self.sigma_ratio.len() != n - 1 {
            return Err(Error::Config(format!(
                "BattX chain of length {n} needs {n} eta and {} sigma ratios",
                n - 1
            )));
        }
        if self.eta[0] != 1.0 || self.sigma_ratio[0] != 1.0 {
            return Err(Error::Config("eta_1 and sigma_1 must equal 1".into()));
        }
        if self
            .eta
            .iter()
            .chain(&self.sigma_ratio)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Config("BattX chain ratios must be positive".into()));
        }
        if !(self.t_ref > 0.0 && self.t_ref.is_finite()) {
            return Err(Error::Config("T_ref must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::Config("initial SoC must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
