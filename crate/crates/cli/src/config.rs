//! Run configuration, read from TOML.
//!
//! Every block rejects unknown keys. Omitted optional blocks fall back to the
//! library defaults, and [`RunConfig::validate`] checks the whole file before
//! any simulation or filtering starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sysid_core::gp::GpConfig;
use sysid_core::hybrid::{OptimizerKind, SchedulerConfig};
use sysid_core::likelihood::{LikelihoodConfig, LikelihoodMethod, UtParams};
use sysid_core::nelder_mead::NelderMeadConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    /// Search box; the model's built-in box when omitted.
    pub parameters: Option<Vec<ParamSpec>>,
    /// Parameters used to synthesize data and to score estimates.
    pub truth: Option<Vec<f64>>,
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub likelihood: LikelihoodBlock,
    #[serde(default)]
    pub gp: GpConfig,
    #[serde(default)]
    pub nelder_mead: NelderMeadConfig,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    /// Held-out datasets for `validate`; the identification datasets when empty.
    #[serde(default)]
    pub validation: Vec<DatasetSpec>,
    pub validate: Option<ValidateBlock>,
    pub filter_comparison: Option<FilterComparison>,
    pub optimizer_comparison: Option<OptimizerComparison>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Battx {
        /// Nominal capacity in ampere-hours; converts C-rates to current.
        capacity_ah: f64,
        #[serde(default = "default_chain_length")]
        chain_length: usize,
        /// Capacitance ratios; all ones when omitted.
        eta: Option<Vec<f64>>,
        /// Resistance ratios; all ones when omitted.
        sigma_ratio: Option<Vec<f64>>,
        #[serde(default = "default_t_ref")]
        t_ref: f64,
        #[serde(default = "default_initial_soc")]
        initial_soc: f64,
        /// `(soc, volts)` knots of the open-circuit voltage curve.
        ocv_knots: Option<Vec<(f64, f64)>>,
    },
    LogisticGrowth {
        #[serde(default = "default_logistic_x0")]
        x0: f64,
        #[serde(default = "default_logistic_p0")]
        p0: f64,
    },
    ScalarAr1 {
        #[serde(default)]
        m0: f64,
        #[serde(default = "default_ar1_p0")]
        p0: f64,
    },
}

fn default_chain_length() -> usize {
    5
}
fn default_t_ref() -> f64 {
    298.0
}
fn default_initial_soc() -> f64 {
    1.0
}
fn default_logistic_x0() -> f64 {
    0.5
}
fn default_logistic_p0() -> f64 {
    1e-4
}
fn default_ar1_p0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub unit: String,
}

/// Diagonals of `Q` and `R`; a single entry is broadcast to every state or channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

/// Estimator choice plus the particle-filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodBlock {
    pub method: LikelihoodMethod,
    pub particles: usize,
    pub alpha_implicit: f64,
    pub ess_fraction: f64,
    pub jitter: f64,
    pub init_cov: f64,
    pub ut: UtParams,
}

impl Default for LikelihoodBlock {
    fn default() -> Self {
        let c = LikelihoodConfig::default();
        Self {
            method: LikelihoodMethod::default(),
            particles: c.particles,
            alpha_implicit: c.alpha_implicit,
            ess_fraction: c.ess_fraction,
            jitter: c.jitter,
            init_cov: c.init_cov,
            ut: c.ut,
        }
    }
}

impl LikelihoodBlock {
    pub fn filter_config(&self) -> LikelihoodConfig {
        LikelihoodConfig {
            particles: self.particles,
            alpha_implicit: self.alpha_implicit,
            ess_fraction: self.ess_fraction,
            jitter: self.jitter,
            init_cov: self.init_cov,
            ut: self.ut,
        }
    }
}

/// A dataset read from CSV (`path`) or synthesized from a current `profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub label: String,
    pub path: Option<PathBuf>,
    pub profile: Option<ProfileSpec>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Synthesize without process or measurement noise.
    #[serde(default)]
    pub noiseless: bool,
    /// Noise seed; derived from the run seed when omitted.
    pub seed: Option<u64>,
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// Fixed discharge at `c_rate`.
    ConstantCrate {
        c_rate: f64,
        /// Seconds.
        duration: f64,
        /// Kelvin.
        #[serde(default = "default_ambient")]
        ambient: f64,
    },
    /// Smoothed random walk of the discharge C-rate, clipped to `[c_rate_min, c_rate_max]`.
    RandomWalk {
        #[serde(default)]
        c_rate_min: f64,
        #[serde(default = "default_c_rate_max")]
        c_rate_max: f64,
        duration: f64,
        #[serde(default = "default_ambient")]
        ambient: f64,
        /// Walk seed; derived from the run seed when omitted.
        seed: Option<u64>,
        /// Standard deviation of one walk increment, in C.
        #[serde(default = "default_walk_step")]
        step: f64,
        /// Exponential smoothing factor in `[0, 1)`.
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
}

pub const MAX_C_RATE: f64 = 5.0;

fn default_ambient() -> f64 {
    298.0
}
fn default_c_rate_max() -> f64 {
    MAX_C_RATE
}
fn default_walk_step() -> f64 {
    0.5
}
fn default_smoothing() -> f64 {
    0.8
}

impl ProfileSpec {
    pub fn duration(&self) -> f64 {
        match self {
            ProfileSpec::ConstantCrate { duration, .. } | ProfileSpec::RandomWalk { duration, .. } => *duration,
        }
    }

    pub fn ambient(&self) -> f64 {
        match self {
            ProfileSpec::ConstantCrate { ambient, .. } | ProfileSpec::RandomWalk { ambient, .. } => *ambient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |c: f64| (0.0..=MAX_C_RATE).contains(&c);
        if !(self.duration() > 0.0 && self.duration().is_finite()) {
            return Err(CliError::Config(format!(
                "profile duration must be > 0, got {}",
                self.duration()
            )));
        }
        if !(self.ambient() > 0.0 && self.ambient().is_finite()) {
            return Err(CliError::Config(format!(
                "ambient temperature must be > 0 K, got {}",
                self.ambient()
            )));
        }
        match *self {
            ProfileSpec::ConstantCrate { c_rate, .. } if !in_range(c_rate) => {
                Err(CliError::Config(format!("c_rate {c_rate} outside [0, {MAX_C_RATE}]")))
            }
            ProfileSpec::RandomWalk {
                c_rate_min,
                c_rate_max,
                step,
                smoothing,
                ..
            } => {
                if !(in_range(c_rate_min) && in_range(c_rate_max) && c_rate_min <= c_rate_max) {
                    return Err(CliError::Config(format!(
                        "random-walk bounds [{c_rate_min}, {c_rate_max}] must be ordered and inside [0, {MAX_C_RATE}]"
                    )));
                }
                if !(step >= 0.0 && step.is_finite()) || !(0.0..1.0).contains(&smoothing) {
                    return Err(CliError::Config(
                        "random-walk step must be >= 0 and smoothing in [0, 1)".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Where `validate` takes θ̂ from: a previous report, an explicit vector, or
/// the truth when neither is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateBlock {
    pub report: Option<PathBuf>,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterComparison {
    pub particles: Vec<usize>,
    pub replications: usize,
    #[serde(default = "default_filter_methods")]
    pub methods: Vec<LikelihoodMethod>,
    /// Evaluation point; the truth when omitted.
    pub theta: Option<Vec<f64>>,
}

fn default_filter_methods() -> Vec<LikelihoodMethod> {
    vec![LikelihoodMethod::Uipf, LikelihoodMethod::Apf]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerComparison {
    #[serde(default = "default_optimizers")]
    pub optimizers: Vec<OptimizerKind>,
    pub runs: usize,
    /// Count evaluations until the best value reaches `L(truth) - threshold_below_truth`.
    pub threshold_below_truth: Option<f64>,
    /// Count evaluations until the best value reaches `L* - threshold_below_best`,
    /// where `L*` is the best value over every run of every optimizer.
    pub threshold_below_best: Option<f64>,
}

fn default_optimizers() -> Vec<OptimizerKind> {
    vec![
        OptimizerKind::Accelerated,
        OptimizerKind::PlainBo,
        OptimizerKind::PlainNm,
    ]
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is representable in TOML")
    }

    /// Schema checks that need no model or data.
    ///
    /// Dimension checks against the model happen in [`crate::setup::Setup::new`].
    pub fn validate(&self) -> Result<()> {
        if let ModelConfig::Battx { capacity_ah, .. } = self.model {
            if !(capacity_ah > 0.0 && capacity_ah.is_finite()) {
                return Err(CliError::Config(format!("capacity_ah must be > 0, got {capacity_ah}")));
            }
        }
        if let Some(params) = &self.parameters {
            if params.is_empty() {
                return Err(CliError::Config("parameter list is empty".into()));
            }
        }
        if let Some(noise) = &self.noise {
            if noise.q.iter().chain(&noise.r).any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(CliError::Config("noise variances must be finite and >= 0".into()));
            }
        }
        self.likelihood.filter_config().validate()?;
        self.gp.validate()?;
        self.nelder_mead.validate()?;
        let mut labels = std::collections::BTreeSet::new();
        for ds in self.datasets.iter().chain(&self.validation) {
            if ds.label.is_empty() || ds.label.contains(['/', '\\']) {
                return Err(CliError::Config(format!("invalid dataset label {:?}", ds.label)));
            }
            if !labels.insert(ds.label.as_str()) {
                return Err(CliError::Config(format!("duplicate dataset label {:?}", ds.label)));
            }
            match (&ds.path, &ds.profile) {
                (Some(_), None) => {}
                (None, Some(p)) => p.validate()?,
                _ => {
                    return Err(CliError::Config(format!(
                        "dataset {:?} needs exactly one of `path` and `profile`",
                        ds.label
                    )))
                }
            }
            if !(ds.dt > 0.0 && ds.dt.is_finite()) {
                return Err(CliError::Config(format!("dataset {:?}: dt must be > 0", ds.label)));
            }
        }
        if let Some(fc) = &self.filter_comparison {
            if fc.particles.is_empty() || fc.particles.contains(&0) || fc.replications == 0 || fc.methods.is_empty() {
                return Err(CliError::Config(
                    "filter_comparison needs particle counts >= 1, replications >= 1 and a method".into(),
                ));
            }
        }
        if let Some(oc) = &self.optimizer_comparison {
            if oc.runs == 0 || oc.optimizers.is_empty() {
                return Err(CliError::Config(
                    "optimizer_comparison needs runs >= 1 and an optimizer".into(),
                ));
            }
            if oc.threshold_below_truth.is_some() && oc.threshold_below_best.is_some() {
                return Err(CliError::Config(
                    "set at most one of threshold_below_truth and threshold_below_best".into(),
                ));
            }
        }
        Ok(())
    }
}
