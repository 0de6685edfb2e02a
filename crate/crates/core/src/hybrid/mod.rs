//! Hybrid Nelder–Mead / Bayesian-optimization search over a box.
//!
//! After a Latin-hypercube initialization the scheduler alternates a
//! Nelder–Mead phase, whose stopping distance halves every round, with an
//! expected-improvement phase that hands control back as soon as it finds a
//! top-`m` point. When a BO phase stagnates, a last Nelder–Mead run from the
//! best `n + 1` points refines the incumbent. Every evaluation lands in one
//! shared observation pool.

mod lhs;
mod pool;
mod scheduler;
mod trace;

use serde::{Deserialize, Serialize};

pub use lhs::latin_hypercube;
pub use pool::ObservationPool;
pub use scheduler::{build_nm_simplex, d_lim_schedule, is_nondegenerate, run, BoOutcome, HybridResult, SimplexChoice};
pub use trace::{EvalRecord, Phase, RunTrace, SchedulerEvent};

use crate::error::{Error, Result};

/// A function to maximize over physical parameters.
///
/// `eval_index` is the 0-based position of the call in the run, so stochastic
/// objectives can derive reproducible per-call seeds.
pub trait Objective: Sync {
    fn evaluate(&self, theta: &[f64], eval_index: u64) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for F {
    fn evaluate(&self, theta: &[f64], _eval_index: u64) -> f64 {
        self(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Alternating Nelder–Mead and BO phases with a final refinement.
    #[default]
    Accelerated,
    /// BO only, until the budget is spent.
    PlainBo,
    /// Nelder–Mead only, restarted from the incumbent plus fresh samples.
    PlainNm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub optimizer: OptimizerKind,
    /// Initial Latin-hypercube samples; `max(2(n+1), 20)` when unset.
    pub initial_samples: Option<usize>,
    /// A BO point ranking among the best `top_m` hands control to Nelder–Mead.
    /// Values above `n` are capped at `n`.
    pub top_m: usize,
    /// Nelder–Mead steps without improvement before a phase ends; `2(n+1)` when unset.
    pub patience: Option<usize>,
    /// BO iterations without a top-`m` point before the search winds down.
    pub stagnation: usize,
    /// Final refinement stops below this average vertex distance (normalized units).
    pub d_final: f64,
    pub eval_budget: usize,
    /// Re-measure `d0` from every round's initial simplex instead of round 1 only.
    pub rebaseline_d0: bool,
    /// Random redraws allowed when a simplex selection is degenerate.
    pub simplex_retries: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Accelerated,
            initial_samples: None,
            top_m: 3,
            patience: None,
            stagnation: 10,
            d_final: 1e-3,
            eval_budget: 1000,
            rebaseline_d0: false,
            simplex_retries: 50,
        }
    }
}

impl SchedulerConfig {
    pub fn initial_samples_for(&self, n: usize) -> usize {
        self.initial_samples.unwrap_or((2 * (n + 1)).max(20))
    }

    pub fn patience_for(&self, n: usize) -> usize {
        self.patience.unwrap_or(2 * (n + 1))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let d = self.initial_samples_for(n);
        let problems = [
            (
                d < n + 1,
                format!("initial_samples = {d} must be at least n + 1 = {}", n + 1),
            ),
            (self.top_m == 0, "top_m must be at least 1".to_string()),
            (self.patience_for(n) == 0, "patience must be at least 1".to_string()),
            (self.stagnation == 0, "stagnation must be at least 1".to_string()),
            (
                !(self.d_final > 0.0),
                format!("d_final must be positive, got {}", self.d_final),
            ),
            (
                self.eval_budget < d,
                format!("eval_budget = {} is below initial_samples = {d}", self.eval_budget),
            ),
        ];
        match problems.into_iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::Config(msg)),
            None => Ok(()),
        }
    }
}
