//! BattX equivalent-circuit model of a lithium-ion cell.
//!
//! Four coupled sub-circuits: an RC chain for solid-phase diffusion in the
//! electrode (A), a three-node RC chain for electrolyte diffusion (B), a
//! core/surface lumped thermal model (C) and the terminal-voltage map (D).

mod model;
mod ocv;
mod params;

pub use model::{
    battx_derivatives, diffusion_resistance, electrolyte_overpotential, entropic_coefficient, heat_rate,
    internal_resistance, soc, terminal_voltage, BattXModel, BattXState,
};
pub use ocv::OcvCurve;
pub use params::{BattXConfig, BattXParams, PARAM_COUNT, PARAM_NAMES, PARAM_UNITS};
