//! The classical solver team: Monte Carlo sampling, cardinality-preserving
//! simulated annealing, a genetic algorithm that accepts external seeds, and
//! tabu search over a QUBO.
//!
//! Every solver is deterministic for a fixed seed when its budget is bounded
//! by evaluation count. Wall-clock limits are honoured as a safety stop only.

mod annealing;
mod genetic;
mod monte_carlo;
mod pool;
mod scorer;
mod tabu;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::ExecMode;

pub use annealing::{simulated_annealing, CoolingSchedule};
pub use genetic::{genetic, repair_to_k, GaConfig};
pub use monte_carlo::{monte_carlo, McMode};
pub use pool::{pool_merge, Objective, PoolEntry, SharedPool, SolutionPool};
pub use scorer::{CqnsFlipObserver, FlipObserver, NoObserver, Scorer};
pub use tabu::{tabu_search, tabu_search_with, TabuConfig};

#[derive(Debug, Error)]
pub enum HeuristicsError {
    #[error("target size {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("seed has length {got}, universe has {expected} assets")]
    SeedDimensionMismatch { expected: usize, got: usize },
    #[error("pools are over different problems: {0}")]
    UniverseMismatch(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed pool line {line}: {reason}")]
    PoolParse { line: usize, reason: String },
}

impl HeuristicsError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidK { .. } => "InvalidK",
            Self::SeedDimensionMismatch { .. } => "SeedDimensionMismatch",
            Self::UniverseMismatch(_) => "UniverseMismatch",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::PoolParse { .. } => "PoolParse",
        }
    }
}

pub type Result<T, E = HeuristicsError> = std::result::Result<T, E>;

/// Which solver produced a pool entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverTag {
    Mc,
    Sa,
    Ga,
    Tabu,
    Sbm,
}

impl SolverTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mc => "mc",
            Self::Sa => "sa",
            Self::Ga => "ga",
            Self::Tabu => "tabu",
            Self::Sbm => "sbm",
        }
    }
}

impl std::fmt::Display for SolverTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mc" => Ok(Self::Mc),
            "sa" => Ok(Self::Sa),
            "ga" => Ok(Self::Ga),
            "tabu" => Ok(Self::Tabu),
            "sbm" => Ok(Self::Sbm),
            other => Err(format!("unknown solver tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverBudget {
    /// Advisory wall-clock limit.
    pub max_seconds: f64,
    /// Reproducible limit on evaluated portfolios (or moves, for tabu).
    pub max_evaluations: Option<u64>,
    pub seed: u64,
    /// Record one [`TracePoint`] per evaluation.
    pub record_trace: bool,
    pub exec: ExecMode,
}

impl Default for SolverBudget {
    fn default() -> Self {
        Self { max_seconds: 300.0, max_evaluations: None, seed: 0, record_trace: false, exec: ExecMode::default() }
    }
}

impl SolverBudget {
    pub fn evaluations(max_evaluations: u64, seed: u64) -> Self {
        Self { max_evaluations: Some(max_evaluations), seed, ..Self::default() }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.max_seconds > 0.0) {
            return Err(HeuristicsError::InvalidConfig(format!(
                "max_seconds must be positive, got {}",
                self.max_seconds
            )));
        }
        Ok(())
    }

    pub(crate) fn clock(&self) -> BudgetClock {
        BudgetClock { start: Instant::now(), max_seconds: self.max_seconds, max_evaluations: self.max_evaluations }
    }
}

pub(crate) struct BudgetClock {
    start: Instant,
    max_seconds: f64,
    max_evaluations: Option<u64>,
}

impl BudgetClock {
    pub fn evaluations_left(&self, done: u64) -> bool {
        self.max_evaluations.is_none_or(|m| done < m)
    }

    pub fn exhausted(&self, done: u64) -> bool {
        !self.evaluations_left(done) || self.elapsed() >= self.max_seconds
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// One evaluated portfolio in a solver's score-vs-sequence series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub sequence: u64,
    /// Final-form CQNS, `None` where it is undefined.
    pub cqns: Option<f64>,
    pub sharpe: Option<f64>,
    /// Whether the solver moved to this portfolio (always true for samplers).
    pub accepted: bool,
}

/// Output of one solver invocation.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub pool: SolutionPool,
    pub trace: Vec<TracePoint>,
    pub evaluations: u64,
    pub elapsed_seconds: f64,
}
