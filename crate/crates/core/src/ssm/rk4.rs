use crate::error::ModelError;

/// One classical fourth-order Runge–Kutta step with the input held constant
/// across the step.
///
/// `derivative(x, u, θ, dxdt)` writes the time derivative into `dxdt`.
pub fn rk4_step<D>(derivative: D, x: &[f64], u: &[f64], theta: &[f64], dt: f64) -> Result<Vec<f64>, ModelError>
where
    D: Fn(&[f64], &[f64], &[f64], &mut [f64]) -> Result<(), ModelError>,
{
    let mut out = vec![0.0; x.len()];
    rk4_step_into(derivative, x, u, theta, dt, &mut out)?;
    Ok(out)
}

/// Allocation-light variant of [`rk4_step`] writing into `out`.
pub fn rk4_step_into<D>(
    derivative: D,
    x: &[f64],
    u: &[f64],
    theta: &[f64],
    dt: f64,
    out: &mut [f64],
) -> Result<(), ModelError>
where
    D: Fn(&[f64], &[f64], &[f64], &mut [f64]) -> Result<(), ModelError>,
{
    let n = x.len();
    if out.len() != n {
        return Err(ModelError::Dimension {
            what: "rk4 output",
            expected: n,
            got: out.len(),
        });
    }
    // k1..k4 and the stage point share one buffer.
    let mut buf = vec![0.0; 5 * n];
    let (k1, rest) = buf.split_at_mut(n);
    let (k2, rest) = rest.split_at_mut(n);
    let (k3, rest) = rest.split_at_mut(n);
    let (k4, stage) = rest.split_at_mut(n);

    let check = |k: &[f64]| -> Result<(), ModelError> {
        match k.iter().position(|v| !v.is_finite()) {
            Some(component) => Err(ModelError::NonFinite { component }),
            None => Ok(()),
        }
    };

    derivative(x, u, theta, k1)?;
    check(k1)?;
    for i in 0..n {
        stage[i] = x[i] + 0.5 * dt * k1[i];
    }
    derivative(stage, u, theta, k2)?;
    check(k2)?;
    for i in 0..n {
        stage[i] = x[i] + 0.5 * dt * k2[i];
    }
    derivative(stage, u, theta, k3)?;
    check(k3)?;
    for i in 0..n {
        stage[i] = x[i] + dt * k3[i];
    }
    derivative(stage, u, theta, k4)?;
    check(k4)?;
    for i in 0..n {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check(out)
}
