use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open-circuit voltage as a function of state of charge.
///
/// Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes)
/// through `(soc, volts)` knots. Arguments outside `[0, 1]` are linearly
/// extrapolated with the end slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct OcvCurve {
    soc: Vec<f64>,
    volts: Vec<f64>,
    slopes: Vec<f64>,
}

impl OcvCurve {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Config("OCV curve needs at least two knots".into()));
        }
        let soc: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let volts: Vec<f64> = knots.iter().map(|k| k.1).collect();
        if soc.iter().chain(&volts).any(|v| !v.is_finite()) {
            return Err(Error::Config("OCV knots must be finite".into()));
        }
        if soc[0] != 0.0 || *soc.last().unwrap() != 1.0 {
            return Err(Error::Config("OCV knots must span SoC 0 to 1".into()));
        }
        if soc.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("OCV SoC knots must be strictly increasing".into()));
        }
        if volts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("OCV voltages must be non-decreasing".into()));
        }
        let slopes = fritsch_carlson_slopes(&soc, &volts);
        Ok(Self { soc, volts, slopes })
    }

    /// Synthetic default curve, 2.5 V empty to 4.2 V full, with the flat
    /// mid-range typical of NCA/graphite cells.
    pub fn default_synthetic() -> Self {
        Self::new(&[
            (0.0, 2.5),
            (0.05, 3.2),
            (0.1, 3.42),
            (0.2, 3.55),
            (0.3, 3.62),
            (0.4, 3.68),
            (0.5, 3.75),
            (0.6, 3.84),
            (0.7, 3.93),
            (0.8, 4.02),
            (0.9, 4.1),
            (1.0, 4.2),
        ])
        .expect("default OCV knots are valid")
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.soc.iter().copied().zip(self.volts.iter().copied()).collect()
    }

    pub fn eval(&self, soc: f64) -> f64 {
        let n = self.soc.len();
        if soc <= 0.0 {
            return self.volts[0] + self.slopes[0] * soc;
        }
        if soc >= 1.0 {
            return self.volts[n - 1] + self.slopes[n - 1] * (soc - 1.0);
        }
        let i = self.soc.partition_point(|&s| s <= soc).saturating_sub(1).min(n - 2);
        let h = self.soc[i + 1] - self.soc[i];
        let t = (soc - self.soc[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.volts[i] + h10 * h * self.slopes[i] + h01 * self.volts[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

impl TryFrom<Vec<(f64, f64)>> for OcvCurve {
    type Error = Error;
    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(&knots)
    }
}

impl From<OcvCurve> for Vec<(f64, f64)> {
    fn from(c: OcvCurve) -> Self {
        c.knots()
    }
}

fn fritsch_carlson_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        m[i] = if delta[i - 1] * delta[i] <= 0.0 {
            0.0
        } else {
            0.5 * (delta[i - 1] + delta[i])
        };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / delta[i];
        let b = m[i + 1] / delta[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * delta[i];
            m[i + 1] = tau * b * delta[i];
        }
    }
    m
}
