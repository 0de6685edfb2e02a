use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use super::{NoiseSpec, StateSpaceModel};
use crate::error::{Error, ModelError, Result};
use crate::linalg::jittered_cholesky;
use crate::rng::rng_from_seed;

/// Output of [`simulate`]: `states[k]` is `x_{k+1}` and `measurements[k]`
/// is `z_{k+1}` for `k = 0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub measurements: Vec<Vec<f64>>,
    /// Whether the model's constraint projection fired at each step.
    pub saturated: Vec<bool>,
}

/// Runs the model forward from `x0` over `inputs`.
///
/// With `noise = None` the run is deterministic. Otherwise process and
/// measurement noise are drawn from a generator seeded with `seed`
/// (0 when absent), so equal seeds give bit-identical trajectories.
pub fn simulate<M: StateSpaceModel + ?Sized>(
    model: &M,
    x0: &[f64],
    inputs: &[Vec<f64>],
    theta: &[f64],
    dt: f64,
    noise: Option<&NoiseSpec>,
    seed: Option<u64>,
) -> Result<Trajectory> {
    let nx = model.state_dim();
    let nz = model.meas_dim();
    if x0.len() != nx {
        return Err(ModelError::Dimension {
            what: "initial state",
            expected: nx,
            got: x0.len(),
        }
        .into());
    }
    if let Some(c) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::Simulation {
            step: 0,
            source: ModelError::NonFinite { component: c },
        });
    }
    let factors = match noise {
        Some(n) => {
            if n.state_dim() != nx || n.meas_dim() != nz {
                return Err(Error::Config("noise dimensions do not match the model".into()));
            }
            let lq = if n.has_process_noise() {
                Some(jittered_cholesky(&n.q, 1e-12, "process noise")?.l())
            } else {
                None
            };
            let lr = jittered_cholesky(&n.r, 0.0, "measurement noise")?.l();
            Some((lq, lr))
        }
        None => None,
    };
    let mut rng = rng_from_seed(seed.unwrap_or(0));

    let mut x = x0.to_vec();
    let mut next = vec![0.0; nx];
    let mut z = vec![0.0; nz];
    let mut out = Trajectory {
        states: Vec::with_capacity(inputs.len()),
        measurements: Vec::with_capacity(inputs.len()),
        saturated: Vec::with_capacity(inputs.len()),
    };
    for (k, u) in inputs.iter().enumerate() {
        let step = k + 1;
        let wrap = |source| Error::Simulation { step, source };
        model.transition(&x, u, theta, dt, &mut next).map_err(wrap)?;
        if let Some((Some(lq), _)) = &factors {
            let w: DVector<f64> = lq * DVector::from_fn(nx, |_, _| StandardNormal.sample(&mut rng));
            for i in 0..nx {
                next[i] += w[i];
            }
        }
        let sat = model.constrain(&mut next);
        if let Some(c) = next.iter().position(|v| !v.is_finite()) {
            return Err(wrap(ModelError::NonFinite { component: c }));
        }
        std::mem::swap(&mut x, &mut next);
        model.measurement(&x, u, theta, &mut z).map_err(wrap)?;
        if let Some((_, lr)) = &factors {
            let v: DVector<f64> = lr * DVector::from_fn(nz, |_, _| StandardNormal.sample(&mut rng));
            for i in 0..nz {
                z[i] += v[i];
            }
        }
        out.states.push(x.clone());
        out.measurements.push(z.clone());
        out.saturated.push(sat);
    }
    Ok(out)
}
