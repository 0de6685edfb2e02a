//! The five subcommands. Each writes its files into the output directory
//! and returns what it wrote so callers and tests can inspect the numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sysid_core::hybrid::{self, HybridResult, OptimizerKind, SchedulerConfig, SchedulerEvent};
use sysid_core::likelihood::{total_log_likelihood, LikelihoodMethod, LikelihoodObjective};
use sysid_core::rng::derive_seed;
use sysid_core::ssm::simulate;
use sysid_core::Dataset;

use crate::error::{CliError, Result};
use crate::setup::{streams, DatasetGroup, LoadedDataset, Setup};
use crate::stats::{mean_std, quantile};

pub struct Options {
    pub out_dir: PathBuf,
    /// Add wall-clock columns; off by default so outputs are reproducible byte for byte.
    pub timing: bool,
    /// θ̂ source for `validate`, overriding the config.
    pub report: Option<PathBuf>,
}

impl Options {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            timing: false,
            report: None,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn prepare(setup: &Setup, opts: &Options) -> Result<()> {
    std::fs::create_dir_all(&opts.out_dir).map_err(CliError::io(&opts.out_dir))?;
    let path = opts.out_dir.join("config.resolved.toml");
    std::fs::write(&path, setup.config.to_toml()).map_err(CliError::io(&path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn method_name(m: LikelihoodMethod) -> &'static str {
    match m {
        LikelihoodMethod::Uipf => "uipf",
        LikelihoodMethod::Apf => "apf",
        LikelihoodMethod::Deterministic => "deterministic",
    }
}

pub fn optimizer_name(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Accelerated => "accelerated",
        OptimizerKind::PlainBo => "plain_bo",
        OptimizerKind::PlainNm => "plain_nm",
    }
}

/// Parameters the data were generated with, taken from the first sidecar.
fn scoring_truth(setup: &Setup, loaded: &[LoadedDataset]) -> Result<Option<Vec<f64>>> {
    let truth = loaded.iter().find_map(|d| d.sidecar.as_ref().map(|s| s.theta.clone()));
    if let Some(t) = &truth {
        if t.len() != setup.space.dim() {
            return Err(CliError::Config(format!(
                "truth sidecar has {} parameters, the search box has {}",
                t.len(),
                setup.space.dim()
            )));
        }
    }
    Ok(truth)
}

fn objective<'a>(
    setup: &'a Setup,
    datasets: &'a [Dataset],
    seed: u64,
) -> LikelihoodObjective<'a, dyn sysid_core::StateSpaceModel + 'a> {
    LikelihoodObjective {
        model: setup.model.ssm(),
        datasets,
        noise: &setup.noise,
        method: setup.config.likelihood.method,
        cfg: setup.config.likelihood.filter_config(),
        seed: derive_seed(seed, streams::OBJECTIVE),
    }
}

/// Runs the configured search with optimizer seed `seed`.
pub fn search(setup: &Setup, datasets: &[Dataset], sched: &SchedulerConfig, seed: u64) -> Result<HybridResult> {
    let obj = objective(setup, datasets, seed);
    Ok(hybrid::run(
        &obj,
        &setup.space,
        sched,
        &setup.config.gp,
        &setup.config.nelder_mead,
        seed,
    )?)
}

/// Log-likelihood with the fixed scoring seed, so estimates and the truth
/// are compared under common random numbers.
pub fn score(setup: &Setup, datasets: &[Dataset], theta: &[f64]) -> f64 {
    total_log_likelihood(
        setup.model.ssm(),
        theta,
        datasets,
        &setup.noise,
        setup.config.likelihood.method,
        &setup.config.likelihood.filter_config(),
        setup.stream_seed(streams::SCORE, 0),
    )
    .value
}

// ---------------------------------------------------------------------------
// simulate

/// Writes `<label>.csv` and `<label>.truth.json` for every synthesized dataset.
pub fn simulate_datasets(setup: &Setup, opts: &Options) -> Result<Vec<PathBuf>> {
    prepare(setup, opts)?;
    let mut written = Vec::new();
    let mut groups = vec![setup.load_group(DatasetGroup::Identification)?];
    if !setup.config.validation.is_empty() {
        groups.push(setup.load_group(DatasetGroup::Validation)?);
    }
    for loaded in groups.into_iter().flatten().filter(|d| d.synthesized) {
        let label = loaded.dataset.label().to_string();
        let csv_path = opts.out_dir.join(format!("{label}.csv"));
        let mut w = create(&csv_path)?;
        loaded.dataset.write_csv(&mut w, &setup.model.csv_header())?;
        w.flush().map_err(CliError::io(&csv_path))?;
        let side = opts.out_dir.join(format!("{label}.truth.json"));
        write_json(&side, &loaded.sidecar)?;
        written.push(csv_path);
        written.push(side);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// identify

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub truth: Option<f64>,
    /// `(estimate - truth) / |truth|`; absent for a zero or unknown truth.
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentificationReport {
    pub model: String,
    pub optimizer: OptimizerKind,
    pub method: LikelihoodMethod,
    pub seed: u64,
    pub evaluations: usize,
    pub best_index: usize,
    pub theta_hat: Vec<f64>,
    /// Best value seen during the search.
    pub search_log_likelihood: f64,
    /// `L(θ̂)` re-evaluated with the scoring seed.
    pub log_likelihood: f64,
    /// `L(θ_true)` with the same scoring seed, when the truth is known.
    pub truth_log_likelihood: Option<f64>,
    pub parameters: Vec<ParameterRow>,
    pub events: Vec<SchedulerEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_secs: Option<f64>,
}

pub struct Identification {
    pub report: IdentificationReport,
    pub result: HybridResult,
}

pub fn identify(setup: &Setup, opts: &Options) -> Result<Identification> {
    prepare(setup, opts)?;
    let loaded = setup.load_group(DatasetGroup::Identification)?;
    let truth = scoring_truth(setup, &loaded)?;
    let datasets: Vec<Dataset> = loaded.into_iter().map(|d| d.dataset).collect();
    let start = Instant::now();
    let result = search(setup, &datasets, &setup.config.scheduler, setup.seed())?;
    let theta_hat = result.best_theta.0.clone();
    let s = &setup.space;
    let parameters = (0..s.dim())
        .map(|i| {
            let t = truth.as_ref().map(|t| t[i]);
            ParameterRow {
                name: s.names()[i].clone(),
                unit: s.units()[i].clone(),
                lower: s.lower()[i],
                upper: s.upper()[i],
                estimate: theta_hat[i],
                truth: t,
                relative_error: t.filter(|t| *t != 0.0).map(|t| (theta_hat[i] - t) / t.abs()),
            }
        })
        .collect();
    let report = IdentificationReport {
        model: setup.model.name().into(),
        optimizer: setup.config.scheduler.optimizer,
        method: setup.config.likelihood.method,
        seed: setup.seed(),
        evaluations: result.trace.records.len(),
        best_index: result.best_index,
        log_likelihood: score(setup, &datasets, &theta_hat),
        truth_log_likelihood: truth.as_ref().map(|t| score(setup, &datasets, t)),
        theta_hat,
        search_log_likelihood: result.best_value,
        parameters,
        events: result.trace.events.clone(),
        wall_secs: opts.timing.then(|| start.elapsed().as_secs_f64()),
    };
    write_json(&opts.out_dir.join("report.json"), &report)?;
    let trace_path = opts.out_dir.join("trace.csv");
    result.trace.write_csv(create(&trace_path)?, opts.timing)?;
    Ok(Identification { report, result })
}

// ---------------------------------------------------------------------------
// validate

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub dataset: String,
    pub channel: String,
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Deserialize)]
struct ReportTheta {
    theta_hat: Vec<f64>,
}

fn read_report_theta(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let r: ReportTheta = serde_json::from_slice(&bytes).map_err(|source| CliError::Report {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(r.theta_hat)
}

/// θ̂ for validation: `--report`, then the config's `validate` block, then the truth.
pub fn validation_theta(setup: &Setup, opts: &Options) -> Result<Vec<f64>> {
    let block = setup.config.validate.as_ref();
    let theta = if let Some(p) = &opts.report {
        read_report_theta(p)?
    } else if let Some(p) = block.and_then(|b| b.report.as_ref()) {
        read_report_theta(&setup.base_dir.join(p))?
    } else if let Some(t) = block.and_then(|b| b.theta.clone()) {
        t
    } else {
        setup.truth.clone()
    };
    if theta.len() != setup.space.dim() {
        return Err(CliError::Config(format!(
            "validation θ has {} entries, expected {}",
            theta.len(),
            setup.space.dim()
        )));
    }
    Ok(theta)
}

/// Simulates each validation dataset at θ̂ without noise and reports
/// per-channel RMSE; residuals go to `<label>.residuals.csv`.
pub fn validate(setup: &Setup, opts: &Options) -> Result<Vec<RmseRow>> {
    prepare(setup, opts)?;
    let theta = validation_theta(setup, opts)?;
    let datasets = setup.load_datasets(DatasetGroup::Validation)?;
    let ssm = setup.model.ssm();
    let channels = setup.model.channels();
    let mut rows = Vec::new();
    for ds in &datasets {
        let x0 = ssm.initial_state(&ds.inputs()[0], &theta);
        let traj = simulate(ssm, &x0, ds.inputs(), &theta, ds.dt(), None, None)?;
        let residuals: Vec<Vec<f64>> = ds
            .measurements()
            .iter()
            .zip(&traj.measurements)
            .map(|(z, s)| z.iter().zip(s).map(|(a, b)| a - b).collect())
            .collect();
        let path = opts.out_dir.join(format!("{}.residuals.csv", ds.label()));
        let mut w = csv_writer(&path)?;
        let mut header = vec!["t".to_string()];
        header.extend(channels.iter().map(|c| format!("residual_{c}")));
        w.write_record(&header).map_err(csv_io(&path))?;
        for (k, r) in residuals.iter().enumerate() {
            let t = (k + 1) as f64 * ds.dt();
            let row: Vec<String> = std::iter::once(t)
                .chain(r.iter().copied())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(csv_io(&path))?;
        }
        w.flush().map_err(CliError::io(&path))?;
        for (j, ch) in channels.iter().enumerate() {
            let ss: f64 = residuals.iter().map(|r| r[j] * r[j]).sum();
            rows.push(RmseRow {
                dataset: ds.label().into(),
                channel: ch.clone(),
                rmse: (ss / residuals.len() as f64).sqrt(),
                samples: residuals.len(),
            });
        }
    }
    let path = opts.out_dir.join("validation.csv");
    let mut w = csv_writer(&path)?;
    for r in &rows {
        w.serialize(r).map_err(csv_io(&path))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// compare-filters

#[derive(Debug, Clone, PartialEq)]
pub struct FilterCell {
    pub method: LikelihoodMethod,
    pub particles: usize,
    /// One estimate per replication, in replication order.
    pub values: Vec<f64>,
    pub failures: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl FilterCell {
    fn new(method: LikelihoodMethod, particles: usize, values: Vec<f64>) -> Self {
        let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let (mean, std) = mean_std(&finite);
        Self {
            method,
            particles,
            failures: values.len() - finite.len(),
            mean,
            std,
            min: quantile(&finite, 0.0),
            q25: quantile(&finite, 0.25),
            median: quantile(&finite, 0.5),
            q75: quantile(&finite, 0.75),
            max: quantile(&finite, 1.0),
            values,
        }
    }
}

/// Repeats each estimator at every particle count. Replication `i` uses the
/// same seed in every cell.
pub fn compare_filters(setup: &Setup, opts: &Options) -> Result<Vec<FilterCell>> {
    let fc = setup
        .config
        .filter_comparison
        .as_ref()
        .ok_or_else(|| CliError::Config("compare-filters needs a [filter_comparison] block".into()))?;
    prepare(setup, opts)?;
    let theta = fc.theta.clone().unwrap_or_else(|| setup.truth.clone());
    if theta.len() != setup.space.dim() {
        return Err(CliError::Config("filter_comparison.theta has the wrong length".into()));
    }
    let datasets = setup.load_datasets(DatasetGroup::Identification)?;
    let mut cells = Vec::new();
    for &method in &fc.methods {
        for &np in &fc.particles {
            let cfg = sysid_core::likelihood::LikelihoodConfig {
                particles: np,
                ..setup.config.likelihood.filter_config()
            };
            let values: Vec<f64> = (0..fc.replications as u64)
                .into_par_iter()
                .map(|rep| {
                    let seed = setup.stream_seed(streams::FILTER, rep);
                    total_log_likelihood(setup.model.ssm(), &theta, &datasets, &setup.noise, method, &cfg, seed).value
                })
                .collect();
            cells.push(FilterCell::new(method, np, values));
        }
    }
    let path = opts.out_dir.join("filter_comparison.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "method",
        "particles",
        "replications",
        "failures",
        "mean",
        "std",
        "min",
        "q25",
        "median",
        "q75",
        "max",
    ])
    .map_err(csv_io(&path))?;
    for c in &cells {
        let mut row = vec![
            method_name(c.method).to_string(),
            c.particles.to_string(),
            c.values.len().to_string(),
            c.failures.to_string(),
        ];
        row.extend([c.mean, c.std, c.min, c.q25, c.median, c.q75, c.max].map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_io(&path))?;
    }
    w.flush().map_err(CliError::io(&path))?;

    let path = opts.out_dir.join("filter_samples.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "particles", "replication", "log_likelihood"])
        .map_err(csv_io(&path))?;
    for c in &cells {
        for (i, v) in c.values.iter().enumerate() {
            w.write_record([
                method_name(c.method).to_string(),
                c.particles.to_string(),
                i.to_string(),
                v.to_string(),
            ])
            .map_err(csv_io(&path))?;
        }
    }
    w.flush().map_err(CliError::io(&path))?;
    Ok(cells)
}

// ---------------------------------------------------------------------------
// compare-optimizers

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRun {
    pub optimizer: OptimizerKind,
    pub run: usize,
    pub seed: u64,
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    /// Best-so-far after each evaluation.
    pub best_so_far: Vec<f64>,
    pub evals_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerComparisonOutput {
    pub truth_log_likelihood: Option<f64>,
    pub threshold: Option<f64>,
    pub runs: Vec<OptimizerRun>,
    /// Per optimizer, mean and std of best-so-far at evaluation `1..=budget`.
    pub curves: Vec<(OptimizerKind, Vec<(f64, f64)>)>,
}

/// Runs every optimizer `runs` times. Run `r` uses the same seed for every
/// optimizer, so all variants see the same initial design.
pub fn compare_optimizers(setup: &Setup, opts: &Options) -> Result<OptimizerComparisonOutput> {
    let oc = setup
        .config
        .optimizer_comparison
        .as_ref()
        .ok_or_else(|| CliError::Config("compare-optimizers needs an [optimizer_comparison] block".into()))?;
    prepare(setup, opts)?;
    let loaded = setup.load_group(DatasetGroup::Identification)?;
    let truth = scoring_truth(setup, &loaded)?;
    let datasets: Vec<Dataset> = loaded.into_iter().map(|d| d.dataset).collect();
    let truth_ll = truth.as_ref().map(|t| score(setup, &datasets, t));
    if oc.threshold_below_truth.is_some() && truth_ll.is_none() {
        return Err(CliError::Config("threshold_below_truth needs a known truth".into()));
    }
    let budget = setup.config.scheduler.eval_budget;
    let jobs: Vec<(OptimizerKind, usize)> = oc
        .optimizers
        .iter()
        .flat_map(|&k| (0..oc.runs).map(move |r| (k, r)))
        .collect();
    let results: Vec<Result<OptimizerRun>> = jobs
        .par_iter()
        .map(|&(optimizer, run)| {
            let seed = setup.stream_seed(streams::RUNS, run as u64);
            let sched = SchedulerConfig {
                optimizer,
                ..setup.config.scheduler.clone()
            };
            let res = search(setup, &datasets, &sched, seed)?;
            Ok(OptimizerRun {
                optimizer,
                run,
                seed,
                best_theta: res.best_theta.0.clone(),
                best_value: res.best_value,
                best_so_far: res.trace.best_so_far(),
                evals_to_threshold: None,
            })
        })
        .collect();
    let mut runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let best = runs.iter().map(|r| r.best_value).fold(f64::NEG_INFINITY, f64::max);
    let threshold = match (oc.threshold_below_truth, oc.threshold_below_best) {
        (Some(d), _) => truth_ll.map(|l| l - d),
        (None, Some(d)) => Some(best - d),
        (None, None) => None,
    };
    if let Some(t) = threshold {
        for r in &mut runs {
            r.evals_to_threshold = r.best_so_far.iter().position(|v| *v >= t).map(|i| i + 1);
        }
    }

    let curves: Vec<(OptimizerKind, Vec<(f64, f64)>)> = oc
        .optimizers
        .iter()
        .map(|&k| {
            let mine: Vec<&OptimizerRun> = runs.iter().filter(|r| r.optimizer == k).collect();
            let stats = (0..budget)
                .map(|i| {
                    let at: Vec<f64> = mine
                        .iter()
                        .map(|r| {
                            r.best_so_far
                                .get(i)
                                .or(r.best_so_far.last())
                                .copied()
                                .unwrap_or(f64::NEG_INFINITY)
                        })
                        .collect();
                    mean_std(&at)
                })
                .collect();
            (k, stats)
        })
        .collect();

    let path = opts.out_dir.join("optimizer_comparison.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["optimizer", "eval_index", "mean", "std", "runs"])
        .map_err(csv_io(&path))?;
    for (k, stats) in &curves {
        for (i, (m, s)) in stats.iter().enumerate() {
            w.write_record([
                optimizer_name(*k).to_string(),
                (i + 1).to_string(),
                m.to_string(),
                s.to_string(),
                oc.runs.to_string(),
            ])
            .map_err(csv_io(&path))?;
        }
    }
    w.flush().map_err(CliError::io(&path))?;

    let path = opts.out_dir.join("optimizer_runs.csv");
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> = [
        "optimizer",
        "run",
        "seed",
        "evaluations",
        "best_value",
        "evals_to_threshold",
    ]
    .map(String::from)
    .to_vec();
    header.extend(setup.space.names().iter().cloned());
    w.write_record(&header).map_err(csv_io(&path))?;
    for r in &runs {
        let mut row = vec![
            optimizer_name(r.optimizer).to_string(),
            r.run.to_string(),
            r.seed.to_string(),
            r.best_so_far.len().to_string(),
            r.best_value.to_string(),
            r.evals_to_threshold.map_or(String::new(), |n| n.to_string()),
        ];
        row.extend(r.best_theta.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_io(&path))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    Ok(OptimizerComparisonOutput {
        truth_log_likelihood: truth_ll,
        threshold,
        runs,
        curves,
    })
}
