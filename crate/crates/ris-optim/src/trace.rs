//! Per-iteration audit trail shared by both solvers, with CSV/JSON export.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::ConstraintReport;

/// Wall time spent in each variable block during one outer iteration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BlockTimings {
    pub aux_s: f64,
    pub beamformers_s: f64,
    pub amplification_s: f64,
    pub phases_s: f64,
    pub varsigma_s: f64,
}

impl BlockTimings {
    pub fn total(&self) -> f64 {
        self.aux_s + self.beamformers_s + self.amplification_s + self.phases_s + self.varsigma_s
    }
}

pub(crate) fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// One outer iteration of either solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sum rate (bits/s/Hz) for the sum-rate problem; total transmit power
    /// (watts) for power minimization.
    pub objective: f64,
    /// Surrogate `h(gamma) + g(...)` value (sum-rate track only).
    pub surrogate: Option<f64>,
    /// Total power right after the certified (W, A) block pair
    /// (power-minimization track only).
    pub power_after_wa: Option<f64>,
    /// `min_k SINR_k / gamma_k` (power-minimization track only).
    pub min_sinr_ratio: Option<f64>,
    /// Relative objective change against the previous iteration.
    pub delta: f64,
    pub timings: BlockTimings,
    pub constraints: ConstraintReport,
}

/// Which problem produced a trace (controls the CSV layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Sumrate,
    Powmin,
}

impl std::str::FromStr for Problem {
    type Err = crate::error::RisError;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sumrate" => Ok(Problem::Sumrate),
            "powmin" => Ok(Problem::Powmin),
            other => Err(crate::error::RisError::Config(format!(
                "unknown problem `{other}` (expected sumrate|powmin)"
            ))),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Problem::Sumrate => write!(f, "sumrate"),
            Problem::Powmin => write!(f, "powmin"),
        }
    }
}

/// Full solve audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub problem: Problem,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub total_seconds: f64,
}

impl SolveTrace {
    pub fn new(problem: Problem) -> Self {
        SolveTrace { problem, iterations: Vec::new(), converged: false, total_seconds: 0.0 }
    }

    pub fn n_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.objective)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.objective).collect()
    }

    /// Two-column CSV for sum-rate runs, three-column for power minimization.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.problem {
            Problem::Sumrate => {
                out.push_str("iteration,sum_rate_bits_per_s_per_hz\n");
                for r in &self.iterations {
                    out.push_str(&format!("{},{:.10e}\n", r.iteration, r.objective));
                }
            }
            Problem::Powmin => {
                out.push_str("iteration,total_power_watts,min_sinr_ratio\n");
                for r in &self.iterations {
                    out.push_str(&format!(
                        "{},{:.10e},{:.10e}\n",
                        r.iteration,
                        r.objective,
                        r.min_sinr_ratio.unwrap_or(f64::NAN)
                    ));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> crate::error::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
