//! Small dense linear-algebra helpers shared by the filters and the GP.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

const JITTER_RETRIES: usize = 8;

/// Cholesky factorization after adding `rel_jitter * (trace / n) * I`.
///
/// On failure the jitter grows by 100x per retry before giving up.
pub fn jittered_cholesky(m: &DMatrix<f64>, rel_jitter: f64, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 || !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate { context });
    }
    let scale = (m.trace() / n as f64).abs().max(1e-300);
    let mut jitter = rel_jitter * scale;
    for _ in 0..JITTER_RETRIES {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            return Ok(ch);
        }
        jitter = if jitter > 0.0 { jitter * 100.0 } else { 1e-12 * scale };
    }
    Err(Error::Degenerate { context })
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Max-norm of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `log N(x; mean, cov)` given the Cholesky factor of `cov`.
pub fn gaussian_log_density_chol(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = x - mean;
    let l = chol.l_dirty();
    let y = l
        .solve_lower_triangular(&d)
        .expect("Cholesky factor has a non-zero diagonal");
    let log_det_half: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.norm_squared() - log_det_half - 0.5 * d.len() as f64 * LN_2PI
}

/// `log N(x; mean, cov)`; factorizes `cov` with the given relative jitter.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>, rel_jitter: f64) -> Result<f64> {
    let chol = jittered_cholesky(cov, rel_jitter, "gaussian density")?;
    Ok(gaussian_log_density_chol(x, mean, &chol))
}

/// Numerically stable `log(sum(exp(v)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
