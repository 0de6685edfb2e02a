use std::path::{Path, PathBuf};
use std::process::Command;

use sysid_harness::commands::{self, Options};
use sysid_harness::setup::{streams, DatasetGroup, Setup};
use sysid_harness::RunConfig;
use sysid_core::gp::GpConfig;
use sysid_core::hybrid::{self, OptimizerKind};
use sysid_core::likelihood::LikelihoodObjective;
use sysid_core::nelder_mead::NelderMeadConfig;
use sysid_core::rng::derive_seed;

const AR1: &str = r#"
seed = 3

[model]
kind = "scalar_ar1"

[noise]
q = [0.1]
r = [0.1]

[likelihood]
particles = 50

[scheduler]
eval_budget = 40

[[datasets]]
label = "ar1"
[datasets.profile]
kind = "constant_crate"
c_rate = 0.0
duration = 200.0
"#;

fn setup(text: &str) -> Setup {
    let cfg = RunConfig::from_toml(text, Path::new("inline.toml")).unwrap();
    Setup::new(cfg, Path::new(".")).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn exit_code(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_sysid"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (h, rows)
}

#[test]
fn shipped_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml(), &path).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(again.to_toml(), cfg.to_toml());
        Setup::new(cfg, path.parent().unwrap()).unwrap();
        seen += 1;
    }
    assert!(seen >= 2);
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let cases = [
        AR1.replace("seed = 3", "seed = 3\nbogus = 1"),
        AR1.replace("particles = 50", "particles = 50\nparticle_count = 3"),
        AR1.replace("c_rate = 0.0", "c_rate = 6.0"),
        AR1.replace("duration = 200.0", "duration = 0.0"),
        AR1.replace("q = [0.1]", "q = [0.1, 0.2]"),
        AR1.replace("eval_budget = 40", "eval_budget = 5"),
        AR1.replace("kind = \"scalar_ar1\"", "kind = \"battx\""),
    ];
    for text in &cases {
        let cfg = write_config(tmp.path(), text);
        let code = exit_code(&["identify", "--config", cfg.to_str().unwrap(), "--out", out]);
        assert_eq!(code, 2, "{text}");
    }
    assert_eq!(exit_code(&["simulate", "--config", "/nonexistent/run.toml"]), 2);
}

#[test]
fn infeasible_space_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    // A carrying capacity far below the initial state makes every trajectory diverge.
    let text = r#"
[model]
kind = "logistic_growth"

[[parameters]]
name = "r"
lower = 1e200
upper = 1e300
[[parameters]]
name = "K"
lower = 1e-100
upper = 1e-99
[[parameters]]
name = "b"
lower = 0.0
upper = 1.0

[scheduler]
eval_budget = 40

[[datasets]]
label = "toy"
[datasets.profile]
kind = "constant_crate"
c_rate = 0.5
duration = 100.0
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    let code = exit_code(&[
        "identify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn successful_runs_exit_with_code_0() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), AR1);
    let out = tmp.path().join("out");
    let code = exit_code(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0);
    assert!(out.join("ar1.csv").exists() && out.join("ar1.truth.json").exists());
    let resolved = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.starts_with("seed = 9\n"));
}

#[test]
fn report_lists_every_parameter_once_with_its_range() {
    let text = AR1.replace(
        "[likelihood]",
        "[[parameters]]\nname = \"a\"\nlower = -0.95\nupper = 0.97\nunit = \"1\"\n\n[likelihood]",
    );
    let s = setup(&text);
    let tmp = tempfile::tempdir().unwrap();
    let id = commands::identify(&s, &Options::new(tmp.path())).unwrap();
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    let rows = json["parameters"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["name"], "a");
    assert_eq!(rows[0]["unit"], "1");
    assert_eq!(rows[0]["lower"], -0.95);
    assert_eq!(rows[0]["upper"], 0.97);
    assert_eq!(rows[0]["truth"], 0.9);
    assert_eq!(rows[0]["estimate"].as_f64().unwrap(), id.report.theta_hat[0]);
    assert!(json.get("wall_secs").is_none());
    let (header, trace) = read_csv(&tmp.path().join("trace.csv"));
    assert_eq!(header, ["eval_index", "phase", "L", "best_so_far", "theta_1"]);
    assert_eq!(trace.len(), id.report.evaluations);

    // The 18 BattX parameters each appear exactly once.
    let bx = setup("[model]\nkind = \"battx\"\ncapacity_ah = 2.5\n");
    let names = bx.space.names().to_vec();
    let mut uniq = names.clone();
    uniq.sort();
    uniq.dedup();
    assert_eq!((names.len(), uniq.len()), (18, 18));
}

#[test]
fn plain_nm_report_matches_a_direct_run() {
    let text = r#"
seed = 12

[model]
kind = "logistic_growth"

[likelihood]
method = "deterministic"

[scheduler]
optimizer = "plain_nm"
eval_budget = 120

[[datasets]]
label = "toy"
[datasets.profile]
kind = "random_walk"
c_rate_max = 1.0
duration = 150.0
"#;
    let s = setup(text);
    let tmp = tempfile::tempdir().unwrap();
    let id = commands::identify(&s, &Options::new(tmp.path())).unwrap();

    let datasets = s.load_datasets(DatasetGroup::Identification).unwrap();
    let obj = LikelihoodObjective {
        model: s.model.ssm(),
        datasets: &datasets,
        noise: &s.noise,
        method: s.config.likelihood.method,
        cfg: s.config.likelihood.filter_config(),
        seed: derive_seed(12, streams::OBJECTIVE),
    };
    let direct = hybrid::run(
        &obj,
        &s.space,
        &s.config.scheduler,
        &GpConfig::default(),
        &NelderMeadConfig::default(),
        12,
    )
    .unwrap();
    assert_eq!(id.report.optimizer, OptimizerKind::PlainNm);
    assert_eq!(id.report.theta_hat, direct.best_theta.0);
    assert_eq!(id.report.search_log_likelihood, direct.best_value);
}

#[test]
fn noiseless_datasets_equal_the_clean_simulation() {
    let text = AR1.replace("c_rate = 0.0", "c_rate = 0.3").replace(
        "[[datasets]]\nlabel = \"ar1\"",
        "[[datasets]]\nlabel = \"ar1\"\nnoiseless = true",
    );
    let s = setup(&text);
    let ds = &s.load_datasets(DatasetGroup::Identification).unwrap()[0];
    // x_k = 0.9 x_{k-1} + 0.3 from x_0 = 0.
    let mut x = 0.0;
    for z in ds.measurements() {
        x = 0.9 * x + 0.3;
        assert_eq!(z[0], x);
    }
}

#[test]
fn measurement_noise_variance_matches_r() {
    let text = AR1
        .replace("q = [0.1]", "q = [0.0]")
        .replace("duration = 200.0", "duration = 20000.0");
    let noisy = setup(&text).load_datasets(DatasetGroup::Identification).unwrap();
    let clean_text = text.replace(
        "[[datasets]]\nlabel = \"ar1\"",
        "[[datasets]]\nlabel = \"ar1\"\nnoiseless = true",
    );
    let clean = setup(&clean_text).load_datasets(DatasetGroup::Identification).unwrap();
    let e: Vec<f64> = noisy[0]
        .measurements()
        .iter()
        .zip(clean[0].measurements())
        .map(|(a, b)| a[0] - b[0])
        .collect();
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / 0.1 - 1.0).abs() < 0.1, "sample variance {var}");
}

#[test]
fn simulate_writes_reproducible_csv() {
    let s = setup(AR1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    commands::simulate_datasets(&s, &Options::new(a.path())).unwrap();
    commands::simulate_datasets(&s, &Options::new(b.path())).unwrap();
    for f in ["ar1.csv", "ar1.truth.json", "config.resolved.toml"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    // A written dataset reads back as a path-sourced dataset with its truth.
    let text = format!(
        "[model]\nkind = \"scalar_ar1\"\n\n[[datasets]]\nlabel = \"ar1\"\npath = \"{}\"\n",
        a.path().join("ar1.csv").display()
    );
    let back = setup(&text).load_group(DatasetGroup::Identification).unwrap();
    assert_eq!(
        back[0].dataset,
        s.load_datasets(DatasetGroup::Identification).unwrap()[0]
    );
    assert_eq!(back[0].sidecar.as_ref().unwrap().theta, vec![0.9]);
}

const BATTX_VALIDATION: &str = r#"
[model]
kind = "battx"
capacity_ah = 2.5

[[validation]]
label = "clean"
noiseless = true
[validation.profile]
kind = "random_walk"
duration = 600.0
ambient = 298.0
seed = 91

[[validation]]
label = "noisy"
[validation.profile]
kind = "constant_crate"
c_rate = 1.0
duration = 3000.0
ambient = 298.0
"#;

#[test]
fn validation_at_the_truth_sits_at_the_noise_floor() {
    let s = setup(BATTX_VALIDATION);
    let tmp = tempfile::tempdir().unwrap();
    let rows = commands::validate(&s, &Options::new(tmp.path())).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[..2].iter().all(|r| r.rmse == 0.0), "{rows:?}");
    let v = &rows[2];
    assert_eq!((v.dataset.as_str(), v.channel.as_str()), ("noisy", "voltage"));
    assert!((v.rmse / 1e-3f64.sqrt() - 1.0).abs() < 0.15, "voltage rmse {}", v.rmse);

    // Recompute every RMSE from the emitted residual files.
    let (_, table) = read_csv(&tmp.path().join("validation.csv"));
    for (row, rec) in rows.iter().zip(&table) {
        let (header, res) = read_csv(&tmp.path().join(format!("{}.residuals.csv", row.dataset)));
        let col = header
            .iter()
            .position(|h| *h == format!("residual_{}", row.channel))
            .unwrap();
        let ss: f64 = res.iter().map(|r| r[col].parse::<f64>().unwrap().powi(2)).sum();
        let rmse = (ss / res.len() as f64).sqrt();
        assert!((rmse - row.rmse).abs() <= 1e-12 * row.rmse.max(1e-300));
        assert_eq!(rec[2].parse::<f64>().unwrap(), row.rmse);
    }
}

#[test]
fn validation_reads_the_estimate_from_a_report() {
    let s = setup(AR1);
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("r.json");
    std::fs::write(&report, r#"{"theta_hat": [0.5], "other": 1}"#).unwrap();
    let opts = Options {
        report: Some(report),
        ..Options::new(tmp.path())
    };
    assert_eq!(commands::validation_theta(&s, &opts).unwrap(), vec![0.5]);
    assert_eq!(
        commands::validation_theta(&s, &Options::new(tmp.path())).unwrap(),
        vec![0.9]
    );
}

fn filter_block(reps: usize) -> String {
    format!("{AR1}\n[filter_comparison]\nparticles = [10, 50]\nreplications = {reps}\n")
}

#[test]
fn single_replication_reports_zero_spread() {
    let s = setup(&filter_block(1));
    let tmp = tempfile::tempdir().unwrap();
    let cells = commands::compare_filters(&s, &Options::new(tmp.path())).unwrap();
    assert_eq!(cells.len(), 4);
    assert!(cells
        .iter()
        .all(|c| c.std == 0.0 && c.values.len() == 1 && c.mean == c.values[0]));
    let (header, rows) = read_csv(&tmp.path().join("filter_comparison.csv"));
    assert_eq!(
        header[..6],
        ["method", "particles", "replications", "failures", "mean", "std"]
    );
    assert_eq!(rows.len(), 4);
}

#[test]
fn doubling_replications_keeps_means_within_three_standard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let small = commands::compare_filters(&setup(&filter_block(40)), &Options::new(tmp.path())).unwrap();
    let large = commands::compare_filters(&setup(&filter_block(80)), &Options::new(tmp.path())).unwrap();
    for (a, b) in small.iter().zip(&large) {
        let se = a.std / (a.values.len() as f64).sqrt();
        assert!(
            (a.mean - b.mean).abs() < 3.0 * se.max(1e-12),
            "{:?} {}: {} vs {}",
            a.method,
            a.particles,
            a.mean,
            b.mean
        );
    }
}

#[test]
fn optimizer_comparison_grid_and_single_run() {
    let text = format!(
        "{}\n[optimizer_comparison]\noptimizers = [\"accelerated\", \"plain_nm\"]\nruns = 1\nthreshold_below_best = 0.5\n",
        AR1.replace("eval_budget = 40", "eval_budget = 60")
    );
    let s = setup(&text);
    let tmp = tempfile::tempdir().unwrap();
    let out = commands::compare_optimizers(&s, &Options::new(tmp.path())).unwrap();
    assert_eq!(out.runs.len(), 2);
    for ((k, curve), run) in out.curves.iter().zip(&out.runs) {
        assert_eq!(*k, run.optimizer);
        assert_eq!(curve.len(), 60);
        for (i, (m, sd)) in curve.iter().enumerate() {
            let expect = run.best_so_far.get(i).or(run.best_so_far.last()).unwrap();
            assert_eq!((m, *sd), (expect, 0.0));
        }
        assert!(run.evals_to_threshold.is_some());
    }
    let (_, rows) = read_csv(&tmp.path().join("optimizer_comparison.csv"));
    let idx: Vec<usize> = rows
        .iter()
        .filter(|r| r[0] == "accelerated")
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(idx, (1..=60).collect::<Vec<_>>());
}
