use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError, Result};
use crate::linalg::{jittered_cholesky, symmetrize};

/// Scaled unscented-transform constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UtParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "UT alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        let w = self.weights(n);
        if !(w.mean0.is_finite() && w.cov0.is_finite() && w.rest.is_finite()) {
            return Err(Error::Config("UT weights are not finite".into()));
        }
        Ok(())
    }

    pub(crate) fn weights(&self, n: usize) -> UtWeights {
        let n = n as f64;
        let lambda = self.alpha * self.alpha * (n + self.kappa) - n;
        let c = n + lambda;
        UtWeights {
            spread: c.sqrt(),
            mean0: lambda / c,
            cov0: lambda / c + (1.0 - self.alpha * self.alpha + self.beta),
            rest: 0.5 / c,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct UtWeights {
    pub spread: f64,
    pub mean0: f64,
    pub cov0: f64,
    pub rest: f64,
}

/// Mean, covariance and input–output cross-covariance of `g(x)`, `x ~ N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtOutput {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

/// Propagates a Gaussian through `g` with `2n + 1` scaled sigma points.
///
/// `g(x, out)` writes an `out_dim` vector. Means are accumulated relative
/// to the central sigma point so that the large, alternating-sign weights
/// of small `alpha` do not swamp the result in roundoff.
pub fn unscented_transform<G>(
    mut g: G,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    out_dim: usize,
    ut: &UtParams,
    rel_jitter: f64,
) -> Result<UtOutput>
where
    G: FnMut(&[f64], &mut [f64]) -> Result<(), ModelError>,
{
    let n = mean.len();
    let w = ut.weights(n);
    let chol = jittered_cholesky(cov, rel_jitter, "unscented transform")?;
    let offsets = chol.l() * w.spread;

    let mut ys = DMatrix::<f64>::zeros(out_dim, 2 * n + 1);
    let mut point = mean.clone();
    let mut buf = vec![0.0; out_dim];
    g(point.as_slice(), &mut buf)?;
    ys.column_mut(0).copy_from_slice(&buf);
    for j in 0..n {
        for (sign, col) in [(1.0, 1 + j), (-1.0, 1 + n + j)] {
            for i in 0..n {
                point[i] = mean[i] + sign * offsets[(i, j)];
            }
            g(point.as_slice(), &mut buf)?;
            ys.column_mut(col).copy_from_slice(&buf);
        }
    }
    if let Some(pos) = ys.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            component: pos % out_dim,
        }
        .into());
    }

    let y0 = ys.column(0).clone_owned();
    let mut shift = DVector::<f64>::zeros(out_dim);
    for c in 1..=2 * n {
        shift += (ys.column(c) - &y0) * w.rest;
    }
    let out_mean = &y0 + &shift;

    let mut out_cov = DMatrix::<f64>::zeros(out_dim, out_dim);
    let mut cross = DMatrix::<f64>::zeros(n, out_dim);
    let d0 = -&shift;
    out_cov.ger(w.cov0, &d0, &d0, 1.0);
    for j in 0..n {
        for (sign, col) in [(1.0, 1 + j), (-1.0, 1 + n + j)] {
            let d = ys.column(col) - &out_mean;
            out_cov.ger(w.rest, &d, &d, 1.0);
            let dx = offsets.column(j) * sign;
            cross.ger(w.rest, &dx, &d, 1.0);
        }
    }
    symmetrize(&mut out_cov);
    Ok(UtOutput {
        mean: out_mean,
        cov: out_cov,
        cross,
    })
}
