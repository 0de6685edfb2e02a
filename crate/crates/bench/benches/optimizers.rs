use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use sysid_bench::quadratic;
use sysid_core::gp::{maximize_acquisition, GpConfig, GpState};
use sysid_core::hybrid::{latin_hypercube, run, SchedulerConfig};
use sysid_core::nelder_mead::{nm_run, NelderMeadConfig, NmStop, Simplex};
use sysid_core::rng::rng_from_seed;
use sysid_core::ParameterSpace;

fn surrogate(c: &mut Criterion) {
    let mut g = c.benchmark_group("gp");
    g.sample_size(10);
    for n in [40, 80] {
        let x = latin_hypercube(n, 4, &mut rng_from_seed(3));
        let y: Vec<f64> = x.iter().map(|p| quadratic(p)).collect();
        g.bench_with_input(BenchmarkId::new("fit", n), &n, |b, _| {
            b.iter(|| GpState::fit(black_box(&x), &y, &GpConfig::default(), None, 5))
        });
        let gp = GpState::fit(&x, &y, &GpConfig::default(), None, 5).expect("fit succeeds");
        let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        g.bench_with_input(BenchmarkId::new("acquisition", n), &n, |b, _| {
            b.iter(|| maximize_acquisition(&gp, best, &GpConfig::default(), 9))
        });
    }
    g.finish();
}

fn simplex(c: &mut Criterion) {
    let space = ParameterSpace::unit(4);
    c.bench_function("nelder_mead_4d", |b| {
        b.iter(|| {
            let mut pts = vec![vec![0.9; 4]];
            for i in 0..4 {
                let mut p = pts[0].clone();
                p[i] -= 0.2;
                pts.push(p);
            }
            let init = Simplex::from_points(pts, quadratic).expect("finite start");
            let stop = NmStop {
                d_lim: 1e-8,
                patience: 50,
                max_evals: 2000,
            };
            let mut f = |x: &[f64]| Some(quadratic(x));
            nm_run(&mut f, init, &stop, &space, &NelderMeadConfig::default())
        })
    });
}

fn hybrid(c: &mut Criterion) {
    let mut g = c.benchmark_group("hybrid");
    g.sample_size(10);
    let cfg = SchedulerConfig {
        eval_budget: 150,
        ..SchedulerConfig::default()
    };
    g.bench_function("quadratic_3d", |b| {
        b.iter(|| {
            run(
                &quadratic,
                &ParameterSpace::unit(3),
                &cfg,
                &GpConfig::default(),
                &NelderMeadConfig::default(),
                4,
            )
        })
    });
    g.finish();
}

criterion_group!(benches, surrogate, simplex, hybrid);
criterion_main!(benches);
