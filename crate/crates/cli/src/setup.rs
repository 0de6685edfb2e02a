//! Turns a validated [`RunConfig`] into a model, a search box, noise
//! covariances and datasets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sysid_core::battx::{BattXConfig, BattXModel, BattXParams, OcvCurve, PARAM_COUNT};
use sysid_core::models::{LogisticGrowth, ScalarAr1};
use sysid_core::rng::derive_seed;
use sysid_core::ssm::simulate;
use sysid_core::{Dataset, NoiseSpec, ParameterSpace, StateSpaceModel};

use crate::config::{DatasetSpec, ModelConfig, ProfileSpec, RunConfig};
use crate::error::{CliError, Result};
use crate::profile::{c_rate_sequence, c_rate_to_current};

/// Independent random streams of a run, all derived from the run seed.
pub mod streams {
    pub const DATA_NOISE: u64 = 1;
    pub const PROFILE: u64 = 2;
    pub const OBJECTIVE: u64 = 3;
    pub const SCORE: u64 = 4;
    pub const FILTER: u64 = 5;
    pub const RUNS: u64 = 6;
}

/// Validation datasets draw their seeds from indices above this offset.
const VALIDATION_OFFSET: u64 = 1 << 20;

/// Built-in logistic-growth truth `[r, K, b]`.
pub const LOGISTIC_TRUTH: [f64; 3] = [1.8, 2.0, 0.5];

pub enum Model {
    BattX { model: BattXModel, capacity_ah: f64 },
    Logistic(LogisticGrowth),
    Ar1(ScalarAr1),
}

impl Model {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::Battx {
                capacity_ah,
                chain_length,
                eta,
                sigma_ratio,
                t_ref,
                initial_soc,
                ocv_knots,
            } => {
                let mut bc = BattXConfig::uniform(*chain_length);
                if let Some(e) = eta {
                    bc.eta = e.clone();
                }
                if let Some(s) = sigma_ratio {
                    bc.sigma_ratio = s.clone();
                }
                if let Some(k) = ocv_knots {
                    bc.ocv = OcvCurve::new(k)?;
                }
                bc.t_ref = *t_ref;
                bc.initial_soc = *initial_soc;
                Model::BattX {
                    model: BattXModel::new(bc)?,
                    capacity_ah: *capacity_ah,
                }
            }
            ModelConfig::LogisticGrowth { x0, p0 } => Model::Logistic(LogisticGrowth { x0: *x0, p0: *p0 }),
            ModelConfig::ScalarAr1 { m0, p0 } => Model::Ar1(ScalarAr1 { m0: *m0, p0: *p0 }),
        })
    }

    pub fn ssm(&self) -> &dyn StateSpaceModel {
        match self {
            Model::BattX { model, .. } => model,
            Model::Logistic(m) => m,
            Model::Ar1(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::BattX { .. } => "battx",
            Model::Logistic(_) => "logistic_growth",
            Model::Ar1(_) => "scalar_ar1",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::BattX { .. } => PARAM_COUNT,
            Model::Logistic(_) => 3,
            Model::Ar1(_) => 1,
        }
    }

    pub fn default_space(&self) -> ParameterSpace {
        let named = |names: &[&str], bounds: &[(f64, f64)]| {
            ParameterSpace::new(
                names.iter().map(|s| s.to_string()).collect(),
                bounds.iter().map(|b| b.0).collect(),
                bounds.iter().map(|b| b.1).collect(),
                vec![String::new(); names.len()],
            )
            .expect("built-in box is valid")
        };
        match self {
            Model::BattX { .. } => BattXParams::search_space(),
            Model::Logistic(_) => named(&["r", "K", "b"], &[(1.0, 3.0), (1.0, 4.0), (0.0, 2.0)]),
            Model::Ar1(_) => named(&["a"], &[(-1.0, 1.0)]),
        }
    }

    pub fn default_truth(&self) -> Vec<f64> {
        match self {
            Model::BattX { .. } => BattXParams::nominal().to_vec(),
            Model::Logistic(_) => LOGISTIC_TRUTH.to_vec(),
            Model::Ar1(_) => vec![0.9],
        }
    }

    /// Default `(Q, R)` diagonals.
    pub fn default_noise(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Model::BattX { .. } => (vec![1e-8], vec![1e-3, 1e-2]),
            Model::Logistic(_) => (vec![1e-4], vec![1e-2]),
            Model::Ar1(_) => (vec![0.1], vec![0.1]),
        }
    }

    /// Model inputs for a C-rate sequence. BattX takes `[current, ambient]`;
    /// the scalar models take the C-rate itself.
    pub fn inputs(&self, c_rates: &[f64], ambient: f64) -> Vec<Vec<f64>> {
        match self {
            Model::BattX { capacity_ah, .. } => c_rates
                .iter()
                .map(|&c| vec![c_rate_to_current(c, *capacity_ah), ambient])
                .collect(),
            _ => c_rates.iter().map(|&c| vec![c]).collect(),
        }
    }

    pub fn csv_header(&self) -> Vec<String> {
        match self {
            Model::BattX { .. } => ["t", "current", "ambient", "voltage", "temperature"]
                .map(String::from)
                .to_vec(),
            _ => Dataset::generic_header(1, 1),
        }
    }

    /// Names of the measurement channels.
    pub fn channels(&self) -> Vec<String> {
        match self {
            Model::BattX { .. } => vec!["voltage".into(), "temperature".into()],
            _ => vec!["z1".into()],
        }
    }
}

/// Which dataset list a spec came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetGroup {
    Identification,
    Validation,
}

/// Scoring metadata written next to a synthesized CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub label: String,
    pub model: String,
    pub parameters: Vec<String>,
    pub theta: Vec<f64>,
    pub noise_seed: Option<u64>,
    pub noiseless: bool,
}

pub struct LoadedDataset {
    pub dataset: Dataset,
    pub sidecar: Option<TruthSidecar>,
    /// Whether the data came from a profile rather than a file.
    pub synthesized: bool,
}

pub struct Setup {
    pub config: RunConfig,
    /// Directory that relative dataset paths are resolved against.
    pub base_dir: PathBuf,
    pub model: Model,
    pub space: ParameterSpace,
    pub noise: NoiseSpec,
    pub truth: Vec<f64>,
}

impl Setup {
    pub fn new(config: RunConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let model = Model::from_config(&config.model)?;
        let n = model.param_count();
        let space = match &config.parameters {
            Some(ps) => ParameterSpace::new(
                ps.iter().map(|p| p.name.clone()).collect(),
                ps.iter().map(|p| p.lower).collect(),
                ps.iter().map(|p| p.upper).collect(),
                ps.iter().map(|p| p.unit.clone()).collect(),
            )?,
            None => model.default_space(),
        };
        if space.dim() != n {
            return Err(CliError::Config(format!(
                "{} has {n} parameters but the parameter block lists {}",
                model.name(),
                space.dim()
            )));
        }
        let truth = config.truth.clone().unwrap_or_else(|| model.default_truth());
        if truth.len() != n {
            return Err(CliError::Config(format!(
                "truth has {} entries, expected {n}",
                truth.len()
            )));
        }
        let (nx, nz) = (model.ssm().state_dim(), model.ssm().meas_dim());
        let (q, r) = match &config.noise {
            Some(c) => (c.q.clone(), c.r.clone()),
            None => model.default_noise(),
        };
        let noise = NoiseSpec::diagonal(&broadcast(&q, nx, "q")?, &broadcast(&r, nz, "r")?)?;
        Ok(Self {
            config,
            base_dir: base_dir.to_path_buf(),
            model,
            space,
            noise,
            truth,
        })
    }

    /// Loads a config file; relative dataset paths resolve against its directory.
    pub fn from_file(path: &Path, seed: Option<u64>) -> Result<Self> {
        let mut config = RunConfig::load(path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        Self::new(config, base)
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Seed number `index` of stream `stream`.
    pub fn stream_seed(&self, stream: u64, index: u64) -> u64 {
        derive_seed(derive_seed(self.config.seed, stream), index)
    }

    pub fn specs(&self, group: DatasetGroup) -> &[DatasetSpec] {
        match group {
            DatasetGroup::Identification => &self.config.datasets,
            DatasetGroup::Validation if self.config.validation.is_empty() => &self.config.datasets,
            DatasetGroup::Validation => &self.config.validation,
        }
    }

    pub fn load_group(&self, group: DatasetGroup) -> Result<Vec<LoadedDataset>> {
        let specs = self.specs(group);
        if specs.is_empty() {
            return Err(CliError::Config("no datasets configured".into()));
        }
        // Falling back to the identification list keeps its seeds.
        let group = if self.config.validation.is_empty() {
            DatasetGroup::Identification
        } else {
            group
        };
        specs.iter().enumerate().map(|(i, s)| self.load(s, group, i)).collect()
    }

    pub fn load_datasets(&self, group: DatasetGroup) -> Result<Vec<Dataset>> {
        Ok(self.load_group(group)?.into_iter().map(|d| d.dataset).collect())
    }

    fn load(&self, spec: &DatasetSpec, group: DatasetGroup, index: usize) -> Result<LoadedDataset> {
        match (&spec.path, &spec.profile) {
            (Some(path), _) => self.read(spec, path),
            (None, Some(profile)) => self.synthesize(spec, profile, group, index),
            (None, None) => unreachable!("validated: a dataset has a path or a profile"),
        }
    }

    fn read(&self, spec: &DatasetSpec, path: &Path) -> Result<LoadedDataset> {
        let full = self.base_dir.join(path);
        let file = std::fs::File::open(&full).map_err(CliError::io(&full))?;
        let (dataset, _) = Dataset::read_csv(file, self.model.ssm().input_dim(), &spec.label)?;
        self.check_dims(&dataset)?;
        let side = full.with_extension("truth.json");
        let sidecar = match std::fs::read(&side) {
            Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|source| CliError::Report {
                path: side.clone(),
                source,
            })?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(CliError::io(side)(e)),
        };
        Ok(LoadedDataset {
            dataset,
            sidecar,
            synthesized: false,
        })
    }

    fn check_dims(&self, ds: &Dataset) -> Result<()> {
        let m = self.model.ssm();
        if ds.input_dim() != m.input_dim() || ds.meas_dim() != m.meas_dim() {
            return Err(CliError::Config(format!(
                "dataset {:?} has {} inputs and {} measurements, the model needs {} and {}",
                ds.label(),
                ds.input_dim(),
                ds.meas_dim(),
                m.input_dim(),
                m.meas_dim()
            )));
        }
        Ok(())
    }

    fn synthesize(
        &self,
        spec: &DatasetSpec,
        profile: &ProfileSpec,
        group: DatasetGroup,
        index: usize,
    ) -> Result<LoadedDataset> {
        let slot = match group {
            DatasetGroup::Identification => index as u64,
            DatasetGroup::Validation => VALIDATION_OFFSET + index as u64,
        };
        let c = c_rate_sequence(profile, spec.dt, self.stream_seed(streams::PROFILE, slot));
        let inputs = self.model.inputs(&c, profile.ambient());
        let ssm = self.model.ssm();
        let x0 = ssm.initial_state(&inputs[0], &self.truth);
        let noise_seed = (!spec.noiseless).then(|| spec.seed.unwrap_or(self.stream_seed(streams::DATA_NOISE, slot)));
        let noise = noise_seed.map(|_| &self.noise);
        let traj = simulate(ssm, &x0, &inputs, &self.truth, spec.dt, noise, noise_seed)?;
        let dataset = Dataset::new(inputs, traj.measurements, spec.dt, spec.label.clone())?;
        Ok(LoadedDataset {
            dataset,
            sidecar: Some(TruthSidecar {
                label: spec.label.clone(),
                model: self.model.name().into(),
                parameters: self.space.names().to_vec(),
                theta: self.truth.clone(),
                noise_seed,
                noiseless: spec.noiseless,
            }),
            synthesized: true,
        })
    }
}

fn broadcast(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v.to_vec()),
        len => Err(CliError::Config(format!(
            "noise `{what}` has {len} entries, expected 1 or {n}"
        ))),
    }
}
