use serde::{Deserialize, Serialize};

use super::params::{BattXConfig, BattXParams, PARAM_COUNT};
use crate::error::ModelError;
use crate::ssm::{rk4_step_into, StateSpaceModel};

/// Owned BattX state: electrode node voltages (normalized to `[0, 1]`),
/// three electrolyte node voltages, core and surface temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattXState {
    pub v_s: Vec<f64>,
    pub v_e: [f64; 3],
    pub t_core: f64,
    pub t_surf: f64,
}

impl BattXState {
    /// Rest state: every electrode node at `soc`, no electrolyte gradient,
    /// both temperatures at ambient.
    pub fn at_rest(n: usize, soc: f64, t_amb: f64) -> Self {
        Self {
            v_s: vec![soc; n],
            v_e: [0.0; 3],
            t_core: t_amb,
            t_surf: t_amb,
        }
    }

    /// Layout `[V_s1..V_sN, V_e1, V_e2, V_e3, T_core, T_surf]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.v_s.clone();
        v.extend_from_slice(&self.v_e);
        v.push(self.t_core);
        v.push(self.t_surf);
        v
    }

    pub fn from_slice(x: &[f64], n: usize) -> Result<Self, ModelError> {
        if x.len() != n + 5 {
            return Err(ModelError::Dimension {
                what: "BattX state",
                expected: n + 5,
                got: x.len(),
            });
        }
        Ok(Self {
            v_s: x[..n].to_vec(),
            v_e: [x[n], x[n + 1], x[n + 2]],
            t_core: x[n + 3],
            t_surf: x[n + 4],
        })
    }
}

fn arrhenius(kappa: f64, t_core: f64, t_ref: f64) -> Result<f64, ModelError> {
    if !(t_core > 0.0) {
        return Err(ModelError::Domain {
            what: "core temperature",
            detail: format!("T_core = {t_core} K"),
        });
    }
    Ok((kappa * (1.0 / t_core - 1.0 / t_ref)).exp())
}

fn soc_of(v_s: &[f64], cfg: &BattXConfig) -> f64 {
    // C_{s,i} = η_i C_{s,1}; the common factor C_{s,1} cancels.
    let num: f64 = v_s.iter().zip(&cfg.eta).map(|(v, e)| v * e).sum();
    let den: f64 = cfg.eta.iter().sum();
    num / den
}

/// Capacitance-weighted mean of the electrode node voltages.
pub fn soc(state: &BattXState, cfg: &BattXConfig, _theta: &BattXParams) -> f64 {
    soc_of(&state.v_s, cfg)
}

/// `R_{s,i,T}` for the resistor between electrode nodes `i` and `i + 1`
/// (1-based, `1 <= i <= N - 1`).
pub fn diffusion_resistance(i: usize, t_core: f64, theta: &BattXParams, cfg: &BattXConfig) -> Result<f64, ModelError> {
    if i == 0 || i >= cfg.chain_length {
        return Err(ModelError::Domain {
            what: "diffusion resistor index",
            detail: format!("{i} not in 1..={}", cfg.chain_length - 1),
        });
    }
    Ok(cfg.sigma_ratio[i - 1] * theta.r_s1 * arrhenius(theta.kappa2, t_core, cfg.t_ref)?)
}

/// SoC- and temperature-dependent ohmic resistance `R_{o,T}`.
pub fn internal_resistance(soc: f64, t_core: f64, theta: &BattXParams, cfg: &BattXConfig) -> Result<f64, ModelError> {
    let poly = theta.gamma1 + theta.gamma2 * soc + theta.gamma3 * soc * soc;
    if !(poly > 0.0) {
        return Err(ModelError::Domain {
            what: "internal resistance",
            detail: format!("R_o(SoC = {soc}) = {poly} is not positive"),
        });
    }
    Ok(poly * arrhenius(theta.kappa1, t_core, cfg.t_ref)?)
}

/// Entropic coefficient `dU_s/dT_core`.
pub fn entropic_coefficient(soc: f64, theta: &BattXParams) -> f64 {
    theta.c1 + theta.c2 * soc + theta.c3 * soc * soc
}

/// `U_e = β_1 ln((V_e1 + β_2) / (V_e3 + β_2))`.
pub fn electrolyte_overpotential(v_e1: f64, v_e3: f64, theta: &BattXParams) -> Result<f64, ModelError> {
    let a = v_e1 + theta.beta2;
    let b = v_e3 + theta.beta2;
    if !(a > 0.0 && b > 0.0) {
        return Err(ModelError::Domain {
            what: "electrolyte overpotential",
            detail: format!("log argument ({a}) / ({b}); beta2 too small for V_e"),
        });
    }
    Ok(theta.beta1 * (a / b).ln())
}

fn terminal_voltage_parts(
    v_s: &[f64],
    v_e: &[f64],
    t_core: f64,
    current: f64,
    theta: &BattXParams,
    cfg: &BattXConfig,
) -> Result<(f64, f64), ModelError> {
    let soc = soc_of(v_s, cfg);
    let r_o = internal_resistance(soc, t_core, theta, cfg)?;
    let u_e = electrolyte_overpotential(v_e[0], v_e[2], theta)?;
    Ok((cfg.ocv.eval(v_s[0]) + u_e + r_o * current, soc))
}

/// Terminal voltage `U_s(V_s1) + U_e + R_{o,T} I` (`I < 0` discharges).
pub fn terminal_voltage(
    state: &BattXState,
    current: f64,
    theta: &BattXParams,
    cfg: &BattXConfig,
) -> Result<f64, ModelError> {
    terminal_voltage_parts(&state.v_s, &state.v_e, state.t_core, current, theta, cfg).map(|p| p.0)
}

fn heat_rate_parts(
    v_s: &[f64],
    v_e: &[f64],
    t_core: f64,
    current: f64,
    theta: &BattXParams,
    cfg: &BattXConfig,
) -> Result<f64, ModelError> {
    let (v, soc) = terminal_voltage_parts(v_s, v_e, t_core, current, theta, cfg)?;
    Ok(current * (v - cfg.ocv.eval(soc)) + current * t_core * entropic_coefficient(soc, theta))
}

/// Heat generation: irreversible ohmic plus reversible entropic term.
pub fn heat_rate(state: &BattXState, current: f64, theta: &BattXParams, cfg: &BattXConfig) -> Result<f64, ModelError> {
    heat_rate_parts(&state.v_s, &state.v_e, state.t_core, current, theta, cfg)
}

/// Right-hand side on the flat state layout; `u = [I, T_amb]`.
fn derivatives_into(
    x: &[f64],
    u: &[f64],
    theta: &BattXParams,
    cfg: &BattXConfig,
    dx: &mut [f64],
) -> Result<(), ModelError> {
    let n = cfg.chain_length;
    let (current, t_amb) = (u[0], u[1]);
    let v_s = &x[..n];
    let v_e = &x[n..n + 3];
    let (t_core, t_surf) = (x[n + 3], x[n + 4]);

    // Sub-circuit A: electrode diffusion chain. Resistor j joins nodes j, j+1.
    let rho = arrhenius(theta.kappa2, t_core, cfg.t_ref)?;
    for i in 0..n {
        let c_i = cfg.eta[i] * theta.c_s1;
        let mut flow = 0.0;
        if i > 0 {
            flow += (v_s[i - 1] - v_s[i]) / (cfg.sigma_ratio[i - 1] * theta.r_s1 * rho);
        }
        if i + 1 < n {
            flow += (v_s[i + 1] - v_s[i]) / (cfg.sigma_ratio[i] * theta.r_s1 * rho);
        }
        if i == 0 {
            flow += current;
        }
        dx[i] = flow / c_i;
    }

    // Sub-circuit B: electrolyte chain.
    let tau_e = theta.c_e * theta.r_e;
    dx[n] = (v_e[1] - v_e[0]) / tau_e + current / theta.c_e;
    dx[n + 1] = (v_e[0] - 2.0 * v_e[1] + v_e[2]) / tau_e;
    dx[n + 2] = (v_e[1] - v_e[2]) / tau_e - current / theta.c_e;

    // Sub-circuit C: two-node thermal model.
    let q = heat_rate_parts(v_s, v_e, t_core, current, theta, cfg)?;
    dx[n + 3] = q / theta.c_core + (t_surf - t_core) / (theta.r_core * theta.c_core);
    dx[n + 4] = (t_amb - t_surf) / (theta.r_surf * theta.c_surf) - (t_surf - t_core) / (theta.r_core * theta.c_surf);
    Ok(())
}

/// Full time derivative of the BattX state for `u = (I, T_amb)`.
pub fn battx_derivatives(
    state: &BattXState,
    u: (f64, f64),
    theta: &BattXParams,
    cfg: &BattXConfig,
) -> Result<BattXState, ModelError> {
    let x = state.to_vec();
    let mut dx = vec![0.0; x.len()];
    derivatives_into(&x, &[u.0, u.1], theta, cfg, &mut dx)?;
    BattXState::from_slice(&dx, cfg.chain_length)
}

/// BattX as a discrete-time state-space model: RK4 over the sampling
/// interval, then electrode voltages clamped to `[0, 1]`.
///
/// State `[V_s1..V_sN, V_e1..V_e3, T_core, T_surf]`, input `[I, T_amb]`,
/// measurement `[V, T_surf]`, θ in [`PARAM_NAMES`](super::PARAM_NAMES) order.
///
/// The transition is the bare RK4 step, so it stays smooth for sigma-point
/// propagation; the clamp of the electrode voltages to `[0, 1]` lives in
/// [`StateSpaceModel::constrain`], which the simulator and the filters apply
/// to every realized state.
#[derive(Debug, Clone)]
pub struct BattXModel {
    cfg: BattXConfig,
}

impl BattXModel {
    pub fn new(cfg: BattXConfig) -> crate::error::Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &BattXConfig {
        &self.cfg
    }

    fn params(theta: &[f64]) -> Result<BattXParams, ModelError> {
        BattXParams::from_slice(theta)
    }
}

impl StateSpaceModel for BattXModel {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn meas_dim(&self) -> usize {
        2
    }

    fn transition(&self, x: &[f64], u: &[f64], theta: &[f64], dt: f64, out: &mut [f64]) -> Result<(), ModelError> {
        let p = Self::params(theta)?;
        rk4_step_into(
            |x, u, _t, dx| derivatives_into(x, u, &p, &self.cfg, dx),
            x,
            u,
            theta,
            dt,
            out,
        )
    }

    fn measurement(&self, x: &[f64], u: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        let p = Self::params(theta)?;
        let n = self.cfg.chain_length;
        let (v, _) = terminal_voltage_parts(&x[..n], &x[n..n + 3], x[n + 3], u[0], &p, &self.cfg)?;
        out[0] = v;
        out[1] = x[n + 4];
        Ok(())
    }

    fn initial_state(&self, u_first: &[f64], _theta: &[f64]) -> Vec<f64> {
        BattXState::at_rest(self.cfg.chain_length, self.cfg.initial_soc, u_first[1]).to_vec()
    }

    fn constrain(&self, x: &mut [f64]) -> bool {
        let mut at_bound = false;
        for v in &mut x[..self.cfg.chain_length] {
            if *v <= 0.0 || *v >= 1.0 {
                *v = v.clamp(0.0, 1.0);
                at_bound = true;
            }
        }
        at_bound
    }

    fn check_params(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != PARAM_COUNT {
            return Err(ModelError::Dimension {
                what: "BattX parameter vector",
                expected: PARAM_COUNT,
                got: theta.len(),
            });
        }
        Self::params(theta)?.validate()
    }
}
