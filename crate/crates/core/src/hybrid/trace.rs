use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nelder_mead::NmTermination;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Nm,
    Bo,
    Final,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Nm => "nm",
            Phase::Bo => "bo",
            Phase::Final => "final",
        }
    }
}

/// One objective call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub phase: Phase,
    /// Parameters in physical units.
    pub theta: Vec<f64>,
    pub value: f64,
    pub best_so_far: f64,
    /// Seconds since the start of the run when the call returned.
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SchedulerEvent {
    /// A Nelder–Mead phase of the given round finished.
    NmPhase {
        round: usize,
        first_eval: usize,
        evals: usize,
        d_initial: f64,
        d0: f64,
        d_lim: f64,
        termination: NmTermination,
    },
    /// A BO observation entered the pool's top `m` and control returns to Nelder–Mead.
    SwitchToNm {
        eval_index: usize,
        value: f64,
        rank: usize,
        /// The best `m + 1` finite pool values right after the observation.
        top_values: Vec<f64>,
    },
    /// A BO phase ended without producing a top-`m` observation.
    Stagnated {
        eval_index: usize,
        iterations: usize,
        budget_exhausted: bool,
    },
    /// The final refinement from the best `n + 1` points.
    Final {
        first_eval: usize,
        evals: usize,
        d_initial: f64,
        termination: Option<NmTermination>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<EvalRecord>,
    pub events: Vec<SchedulerEvent>,
}

impl RunTrace {
    /// Best-so-far value after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    /// Number of evaluations until the best value first reaches `threshold`.
    pub fn evals_to_reach(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .position(|r| r.best_so_far >= threshold)
            .map(|i| i + 1)
    }

    /// Writes `eval_index,phase,L,best_so_far,theta_1..theta_n`, plus a
    /// trailing `wall_secs` column when `with_time` is set.
    pub fn write_csv<W: Write>(&self, writer: W, with_time: bool) -> Result<()> {
        let n = self.records.first().map_or(0, |r| r.theta.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["eval_index", "phase", "L", "best_so_far"].map(String::from).to_vec();
        header.extend((1..=n).map(|i| format!("theta_{i}")));
        if with_time {
            header.push("wall_secs".into());
        }
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                r.index.to_string(),
                r.phase.as_str().to_string(),
                r.value.to_string(),
                r.best_so_far.to_string(),
            ];
            row.extend(r.theta.iter().map(|v| v.to_string()));
            if with_time {
                row.push(format!("{:.6}", r.wall_secs));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
