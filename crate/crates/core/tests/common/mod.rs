#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sysid_core::models::{LinearModel, ScalarAr1};
use sysid_core::ssm::{simulate, Dataset, NoiseSpec};

/// Textbook Kalman filter; returns the per-step predictive log-likelihoods
/// for `x_k = A x_{k-1} + B u_k + w`, `z_k = C x_k + v`, `x_0 ~ N(m0, P0)`.
pub fn kalman_terms(model: &LinearModel, noise: &NoiseSpec, ds: &Dataset) -> Vec<f64> {
    let mut m = model.m0.clone();
    let mut p = model.p0.clone();
    let nz = model.c.nrows() as f64;
    let mut out = Vec::new();
    for (u, z) in ds.inputs().iter().zip(ds.measurements()) {
        let u = DVector::from_column_slice(u);
        let z = DVector::from_column_slice(z);
        m = &model.a * &m + &model.b * u;
        p = &model.a * &p * model.a.transpose() + &noise.q;
        let s = &model.c * &p * model.c.transpose() + &noise.r;
        let s_inv = s.clone().try_inverse().unwrap();
        let e = &z - &model.c * &m;
        let quad = (e.transpose() * &s_inv * &e)[(0, 0)];
        out.push(-0.5 * (quad + s.determinant().ln() + nz * (2.0 * std::f64::consts::PI).ln()));
        let k = &p * model.c.transpose() * &s_inv;
        m += &k * e;
        p = (DMatrix::identity(p.nrows(), p.nrows()) - &k * &model.c) * &p;
    }
    out
}

pub fn kalman_log_likelihood(model: &LinearModel, noise: &NoiseSpec, ds: &Dataset) -> f64 {
    kalman_terms(model, noise, ds).iter().sum()
}

/// The scalar AR(1) of the acceptance checks: a = 0.9, q = r = 0.1, zero
/// input, started from its stationary distribution.
pub struct Ar1Case {
    pub model: ScalarAr1,
    pub linear: LinearModel,
    pub noise: NoiseSpec,
    pub a: f64,
}

pub fn ar1_case(a: f64, q: f64, r: f64) -> Ar1Case {
    let p0 = q / (1.0 - a * a);
    let model = ScalarAr1 { m0: 0.0, p0 };
    let mut linear = LinearModel::new(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 0.0),
        DMatrix::from_element(1, 1, p0),
    );
    linear.b = DMatrix::from_element(1, 1, 1.0);
    Ar1Case {
        model,
        linear,
        noise: NoiseSpec::diagonal(&[q], &[r]).unwrap(),
        a,
    }
}

pub fn ar1_dataset(case: &Ar1Case, t: usize, seed: u64) -> Dataset {
    let inputs = vec![vec![0.0]; t];
    let traj = simulate(
        &case.model,
        &[0.0],
        &inputs,
        &[case.a],
        1.0,
        Some(&case.noise),
        Some(seed),
    )
    .unwrap();
    Dataset::new(inputs, traj.measurements, 1.0, "ar1").unwrap()
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}
