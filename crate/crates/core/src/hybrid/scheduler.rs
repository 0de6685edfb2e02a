use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::lhs::latin_hypercube;
use super::pool::ObservationPool;
use super::trace::{EvalRecord, Phase, RunTrace, SchedulerEvent};
use super::{Objective, OptimizerKind, SchedulerConfig};
use crate::error::{Error, Result};
use crate::gp::{maximize_acquisition, training_indices, GpConfig, GpState, Hyper};
use crate::nelder_mead::{average_vertex_distance, nm_run, NelderMeadConfig, NmStop, NmTermination, Simplex, Vertex};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::ssm::{ParameterPoint, ParameterSpace};

/// Points closer than this (normalized units) are treated as duplicates.
const DUPLICATE_TOL: f64 = 1e-9;
/// Offset, in box widths, used to repair a degenerate simplex.
const PERTURBATION: f64 = 1e-6;

const STREAM_SCHEDULER: u64 = 0x5c4e_d01e;
const STREAM_GP: u64 = 0x6f17;
const STREAM_ACQ: u64 = 0xac9;

/// Outcome of an optimization run.
#[derive(Debug, Clone)]
pub struct HybridResult {
    /// Pool argmax in physical units.
    pub best_theta: ParameterPoint,
    pub best_value: f64,
    /// Evaluation index of the argmax.
    pub best_index: usize,
    pub trace: RunTrace,
    /// All evaluations in normalized coordinates.
    pub pool: ObservationPool,
}

/// Vertices chosen for a new simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexChoice {
    /// Pool indices; the first `m` are the pool's best points.
    pub indices: Vec<usize>,
    /// No affinely independent selection was found within the retry cap.
    pub degenerate: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Whether the points span a full-dimensional simplex.
pub fn is_nondegenerate(points: &[&[f64]]) -> bool {
    let n = points[0].len();
    if points.len() != n + 1 {
        return false;
    }
    let d = DMatrix::from_fn(n, n, |r, c| points[c + 1][r] - points[0][r]);
    let sv = d.singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min > 1e-9 * max
}

/// Pool indices in descending value order with near-duplicates removed.
fn distinct_ranked(pool: &ObservationPool) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in pool.ranked() {
        if kept
            .iter()
            .all(|&k| distance(&pool.points[k], &pool.points[i]) > DUPLICATE_TOL)
        {
            kept.push(i);
        }
    }
    kept
}

/// Selects the pool's best `m` points plus `n + 1 - m` others drawn
/// uniformly, redrawing up to `retries` times while the selection spans a
/// zero-volume simplex.
pub fn build_nm_simplex(pool: &ObservationPool, m: usize, rng: &mut Rng, retries: usize) -> Result<SimplexChoice> {
    let Some(first) = pool.points.first() else {
        return Err(Error::DegenerateSimplex("empty pool".into()));
    };
    let n = first.len();
    if pool.len() < n + 1 {
        return Err(Error::DegenerateSimplex(format!(
            "pool holds {} points, a simplex needs {}",
            pool.len(),
            n + 1
        )));
    }
    let m = m.clamp(1, n);
    let mut ranked = distinct_ranked(pool);
    if ranked.len() < n + 1 {
        // Fall back to duplicates; the caller repairs the simplex.
        for i in pool.ranked() {
            if ranked.len() == n + 1 {
                break;
            }
            if !ranked.contains(&i) {
                ranked.push(i);
            }
        }
    }
    let top: Vec<usize> = ranked[..m].to_vec();
    let rest = &ranked[m..];
    let finite_rest: Vec<usize> = rest.iter().copied().filter(|&i| pool.values[i].is_finite()).collect();
    let need = n + 1 - m;
    let candidates: &[usize] = if finite_rest.len() >= need { &finite_rest } else { rest };

    let mut last = Vec::new();
    for _ in 0..retries.max(1) {
        let mut indices = top.clone();
        indices.extend(candidates.choose_multiple(rng, need).copied());
        let pts: Vec<&[f64]> = indices.iter().map(|&i| pool.points[i].as_slice()).collect();
        if is_nondegenerate(&pts) {
            return Ok(SimplexChoice {
                indices,
                degenerate: false,
            });
        }
        last = indices;
    }
    Ok(SimplexChoice {
        indices: last,
        degenerate: true,
    })
}

/// `d_lim = d0 / 2^round` for `round >= 1`.
pub fn d_lim_schedule(round: usize, d0: f64) -> f64 {
    assert!(round >= 1, "rounds are numbered from 1");
    d0 / 2f64.powi(round as i32)
}

/// Outcome of one BO phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoOutcome {
    SwitchToNm,
    Stagnated,
}

struct Runner<'a, O: Objective + ?Sized> {
    objective: &'a O,
    space: &'a ParameterSpace,
    unit: ParameterSpace,
    cfg: &'a SchedulerConfig,
    gp_cfg: &'a GpConfig,
    nm_cfg: NelderMeadConfig,
    budget: usize,
    pool: ObservationPool,
    trace: RunTrace,
    start: Instant,
    rng: Rng,
    seed: u64,
    hyper: Option<Hyper>,
    bo_iters: usize,
}

impl<'a, O: Objective + ?Sized> Runner<'a, O> {
    fn used(&self) -> usize {
        self.pool.len()
    }

    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.used())
    }

    fn record(&mut self, x: Vec<f64>, value: f64, phase: Phase, wall_secs: f64) {
        let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
        let prev = self.trace.records.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far);
        let best_so_far = if value.is_finite() { prev.max(value) } else { prev };
        let theta = self.space.denormalize(&x).0;
        self.trace.records.push(EvalRecord {
            index: self.used(),
            phase,
            theta,
            value,
            best_so_far,
            wall_secs,
        });
        self.pool.push(x, value);
    }

    fn evaluate(&mut self, x: &[f64], phase: Phase) -> Option<f64> {
        if self.remaining() == 0 {
            return None;
        }
        let theta = self.space.denormalize(x);
        let v = self.objective.evaluate(&theta, self.used() as u64);
        let t = self.start.elapsed().as_secs_f64();
        self.record(x.to_vec(), v, phase, t);
        Some(*self.pool.values.last().expect("just pushed"))
    }

    /// Evaluates independent points concurrently, in index order, within budget.
    fn evaluate_batch(&mut self, xs: Vec<Vec<f64>>, phase: Phase) {
        let take = xs.len().min(self.remaining());
        let base = self.used();
        let start = self.start;
        let objective = self.objective;
        let space = self.space;
        let values: Vec<(f64, f64)> = xs[..take]
            .par_iter()
            .enumerate()
            .map(|(k, x)| {
                let v = objective.evaluate(&space.denormalize(x), (base + k) as u64);
                (v, start.elapsed().as_secs_f64())
            })
            .collect();
        for (x, (v, t)) in xs.into_iter().zip(values) {
            self.record(x, v, phase, t);
        }
    }

    fn initialize(&mut self, count: usize) -> Result<()> {
        let n = self.space.dim();
        let pts = latin_hypercube(count, n, &mut self.rng);
        self.evaluate_batch(pts, Phase::Init);
        if self.pool.finite_count() == 0 {
            return Err(Error::InfeasibleSpace(self.pool.len()));
        }
        Ok(())
    }

    /// Builds a simplex from pool indices, nudging vertices off a
    /// zero-volume configuration and evaluating the moved ones.
    fn simplex_from(&mut self, indices: &[usize], phase: Phase) -> Option<Simplex> {
        let mut vertices: Vec<Vertex> = indices
            .iter()
            .map(|&i| Vertex {
                theta: self.pool.points[i].clone(),
                value: self.pool.values[i],
            })
            .collect();
        let pts: Vec<&[f64]> = vertices.iter().map(|v| v.theta.as_slice()).collect();
        if !is_nondegenerate(&pts) {
            for (i, v) in vertices.iter_mut().enumerate().skip(1) {
                let j = i - 1;
                v.theta[j] += if v.theta[j] + PERTURBATION <= 1.0 {
                    PERTURBATION
                } else {
                    -PERTURBATION
                };
                v.value = self.evaluate(&v.theta, phase)?;
            }
        }
        Simplex::new(vertices).ok()
    }

    fn nm_evaluate_run(&mut self, simplex: Simplex, stop: NmStop, phase: Phase) -> Result<(usize, NmTermination)> {
        let first = self.used();
        let unit = self.unit.clone();
        let nm_cfg = self.nm_cfg;
        let run = nm_run(&mut |x: &[f64]| self.evaluate(x, phase), simplex, &stop, &unit, &nm_cfg)?;
        Ok((first, run.termination))
    }

    fn nm_phase(&mut self, round: usize, d0: &mut Option<f64>) -> Result<()> {
        let m = self.cfg.top_m.min(self.space.dim());
        let choice = build_nm_simplex(&self.pool, m, &mut self.rng, self.cfg.simplex_retries)?;
        let first_eval = self.used();
        let Some(simplex) = self.simplex_from(&choice.indices, Phase::Nm) else {
            return Ok(());
        };
        let d_initial = average_vertex_distance(&simplex);
        if d0.is_none() || self.cfg.rebaseline_d0 {
            *d0 = Some(d_initial);
        }
        let d0v = d0.expect("set above");
        let d_lim = d_lim_schedule(round, d0v);
        let stop = NmStop {
            d_lim,
            patience: self.cfg.patience_for(self.space.dim()),
            max_evals: self.remaining(),
        };
        let termination = if self.remaining() == 0 {
            NmTermination::Budget
        } else {
            self.nm_evaluate_run(simplex, stop, Phase::Nm)?.1
        };
        self.trace.events.push(SchedulerEvent::NmPhase {
            round,
            first_eval,
            evals: self.used() - first_eval,
            d_initial,
            d0: d0v,
            d_lim,
            termination,
        });
        Ok(())
    }

    fn random_point(&mut self) -> Vec<f64> {
        (0..self.space.dim()).map(|_| self.rng.random::<f64>()).collect()
    }

    /// Next BO query: the EI maximizer of a GP trained on the pool.
    fn propose(&mut self) -> Vec<f64> {
        let iter = self.bo_iters as u64;
        self.bo_iters += 1;
        let idx = training_indices(&self.pool.values, self.gp_cfg.max_train_points);
        if idx.len() < 2 {
            return self.random_point();
        }
        let x: Vec<Vec<f64>> = idx.iter().map(|&i| self.pool.points[i].clone()).collect();
        let y: Vec<f64> = idx.iter().map(|&i| self.pool.values[i]).collect();
        let refit = self.hyper.is_none()
            || self.pool.len() <= self.gp_cfg.refit_full_until
            || iter.is_multiple_of(self.gp_cfg.refit_every as u64);
        let fit_seed = derive_seed(derive_seed(self.seed, STREAM_GP), iter);
        let gp = if refit {
            GpState::fit(&x, &y, self.gp_cfg, self.hyper.as_ref(), fit_seed)
        } else {
            let h = self.hyper.clone().expect("checked above");
            GpState::condition(&x, &y, h.kernel(self.gp_cfg.kernel), h.noise_var())
                .or_else(|_| GpState::fit(&x, &y, self.gp_cfg, Some(&h), fit_seed))
        };
        let Ok(gp) = gp else {
            return self.random_point();
        };
        self.hyper = Some(gp.hyper());
        let l_star = self.pool.best_value();
        let acq_seed = derive_seed(derive_seed(self.seed, STREAM_ACQ), iter);
        let (mut xn, _) = maximize_acquisition(&gp, l_star, self.gp_cfg, acq_seed);
        if self.pool.contains_near(&xn, DUPLICATE_TOL) {
            let (redraw, _) = maximize_acquisition(&gp, l_star, self.gp_cfg, derive_seed(acq_seed, 1));
            xn = if self.pool.contains_near(&redraw, DUPLICATE_TOL) {
                self.random_point()
            } else {
                redraw
            };
        }
        xn
    }

    fn bo_phase(&mut self, switching: bool) -> BoOutcome {
        let m = self.cfg.top_m.min(self.space.dim());
        let mut iterations = 0;
        loop {
            if self.remaining() == 0 {
                self.trace.events.push(SchedulerEvent::Stagnated {
                    eval_index: self.used().saturating_sub(1),
                    iterations,
                    budget_exhausted: true,
                });
                return BoOutcome::Stagnated;
            }
            let x = self.propose();
            let Some(value) = self.evaluate(&x, Phase::Bo) else {
                continue;
            };
            iterations += 1;
            let index = self.used() - 1;
            if switching && self.pool.in_top(index, m) {
                let ranked = self.pool.ranked();
                let top_values = ranked
                    .iter()
                    .map(|&i| self.pool.values[i])
                    .filter(|v| v.is_finite())
                    .take(m + 1)
                    .collect();
                self.trace.events.push(SchedulerEvent::SwitchToNm {
                    eval_index: index,
                    value,
                    rank: self.pool.rank_of(index),
                    top_values,
                });
                return BoOutcome::SwitchToNm;
            }
            if switching && iterations >= self.cfg.stagnation {
                self.trace.events.push(SchedulerEvent::Stagnated {
                    eval_index: index,
                    iterations,
                    budget_exhausted: false,
                });
                return BoOutcome::Stagnated;
            }
        }
    }

    fn final_refinement(&mut self) -> Result<()> {
        let n = self.space.dim();
        let mut indices = distinct_ranked(&self.pool);
        for i in self.pool.ranked() {
            if indices.len() > n {
                break;
            }
            if !indices.contains(&i) {
                indices.push(i);
            }
        }
        indices.truncate(n + 1);
        if indices.len() < n + 1 {
            return Ok(());
        }
        let first_eval = self.used();
        let Some(simplex) = self.simplex_from(&indices, Phase::Final) else {
            return Ok(());
        };
        let d_initial = average_vertex_distance(&simplex);
        let termination = if d_initial < self.cfg.d_final || self.remaining() == 0 {
            None
        } else {
            let stop = NmStop {
                d_lim: self.cfg.d_final,
                patience: usize::MAX,
                max_evals: self.remaining(),
            };
            Some(self.nm_evaluate_run(simplex, stop, Phase::Final)?.1)
        };
        self.trace.events.push(SchedulerEvent::Final {
            first_eval,
            evals: self.used() - first_eval,
            d_initial,
            termination,
        });
        Ok(())
    }

    fn accelerated(&mut self) -> Result<()> {
        let mut d0 = None;
        let mut round = 0;
        while self.remaining() > 0 {
            round += 1;
            self.nm_phase(round, &mut d0)?;
            if self.remaining() == 0 || self.bo_phase(true) == BoOutcome::Stagnated {
                break;
            }
        }
        self.final_refinement()
    }

    fn plain_nm(&mut self) -> Result<()> {
        let n = self.space.dim();
        let mut indices: Vec<usize> = distinct_ranked(&self.pool);
        indices.truncate(n + 1);
        let mut round = 0;
        while self.remaining() > 0 && indices.len() == n + 1 {
            round += 1;
            let first_eval = self.used();
            let Some(simplex) = self.simplex_from(&indices, Phase::Nm) else {
                break;
            };
            let d_initial = average_vertex_distance(&simplex);
            let stop = NmStop {
                d_lim: self.cfg.d_final,
                patience: self.cfg.patience_for(n),
                max_evals: self.remaining(),
            };
            let (_, termination) = self.nm_evaluate_run(simplex, stop, Phase::Nm)?;
            self.trace.events.push(SchedulerEvent::NmPhase {
                round,
                first_eval,
                evals: self.used() - first_eval,
                d_initial,
                d0: d_initial,
                d_lim: self.cfg.d_final,
                termination,
            });
            if termination == NmTermination::Budget {
                break;
            }
            // Restart from the incumbent plus fresh space-filling points.
            let best = self.pool.best_index().expect("pool is non-empty");
            let first_new = self.used();
            let fresh = latin_hypercube(n, n, &mut self.rng);
            self.evaluate_batch(fresh, Phase::Nm);
            indices = std::iter::once(best).chain(first_new..self.used()).collect();
        }
        Ok(())
    }

    fn plain_bo(&mut self) {
        while self.remaining() > 0 {
            self.bo_phase(false);
        }
    }
}

/// Maximizes `objective` over `space` with the configured optimizer.
///
/// The search runs in the unit cube of the normalized space; the objective
/// receives physical parameters and the 0-based evaluation index.
pub fn run<O: Objective + ?Sized>(
    objective: &O,
    space: &ParameterSpace,
    cfg: &SchedulerConfig,
    gp_cfg: &GpConfig,
    nm_cfg: &NelderMeadConfig,
    seed: u64,
) -> Result<HybridResult> {
    let n = space.dim();
    cfg.validate(n)?;
    gp_cfg.validate()?;
    nm_cfg.validate()?;
    let mut runner = Runner {
        objective,
        space,
        unit: ParameterSpace::unit(n),
        cfg,
        gp_cfg,
        nm_cfg: *nm_cfg,
        budget: cfg.eval_budget,
        pool: ObservationPool::default(),
        trace: RunTrace::default(),
        start: Instant::now(),
        rng: rng_from_seed(derive_seed(seed, STREAM_SCHEDULER)),
        seed,
        hyper: None,
        bo_iters: 0,
    };
    runner.initialize(cfg.initial_samples_for(n))?;
    match cfg.optimizer {
        OptimizerKind::Accelerated => runner.accelerated()?,
        OptimizerKind::PlainNm => runner.plain_nm()?,
        OptimizerKind::PlainBo => runner.plain_bo(),
    }
    let best_index = runner.pool.best_index().expect("pool is non-empty");
    Ok(HybridResult {
        best_theta: space.denormalize(&runner.pool.points[best_index]),
        best_value: runner.pool.values[best_index],
        best_index,
        trace: runner.trace,
        pool: runner.pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves() {
        assert_eq!(d_lim_schedule(1, 1.0), 0.5);
        assert!((d_lim_schedule(3, 0.8) - 0.1).abs() < 1e-16);
    }

    #[test]
    fn degeneracy_check() {
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        let c = [2.0, 0.0];
        let d = [0.0, 1.0];
        assert!(!is_nondegenerate(&[&a, &b, &c]));
        assert!(is_nondegenerate(&[&a, &b, &d]));
    }

    #[test]
    fn whole_pool_when_minimal() {
        let mut pool = ObservationPool::default();
        for (p, v) in [([0.1, 0.1], 1.0), ([0.9, 0.2], 3.0), ([0.4, 0.8], 2.0)] {
            pool.push(p.to_vec(), v);
        }
        let mut rng = rng_from_seed(1);
        let c = build_nm_simplex(&pool, 1, &mut rng, 10).unwrap();
        let mut idx = c.indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(c.indices[0], 1);
        assert!(!c.degenerate);
    }
}
