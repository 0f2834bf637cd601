use std::fmt;

use cqns_core::heuristics::HeuristicsError;
use cqns_core::market_data::MarketDataError;
use cqns_core::pipeline::{PipelineError, VerifyError};
use cqns_core::qubo::QuboError;
use cqns_core::sbm::SbmError;
use cqns_core::scoring::ScoringError;
use serde::Serialize;

/// A failed invocation: exit code plus the machine-readable error line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub error: String,
    pub module: String,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { error: "UsageError".into(), module: "cli".into(), message: message.into(), exit_code: 2 }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { error: "InvalidConfig".into(), module: "cli".into(), message: message.into(), exit_code: 2 }
    }

    pub fn domain(code: &str, module: &str, message: impl fmt::Display) -> Self {
        Self { error: code.into(), module: module.into(), message: message.to_string(), exit_code: 1 }
    }

    pub fn io(what: impl fmt::Display, e: impl fmt::Display) -> Self {
        Self::domain("IoError", "cli", format!("{what}: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.error, self.module, self.message)
    }
}

impl std::error::Error for CliError {}

macro_rules! from_domain {
    ($ty:ty, $module:expr) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::domain(e.code(), $module, &e)
            }
        }
    };
}

from_domain!(MarketDataError, "market_data");
from_domain!(ScoringError, "scoring");
from_domain!(QuboError, "qubo");
from_domain!(SbmError, "sbm");
from_domain!(HeuristicsError, "heuristics");
from_domain!(VerifyError, "pipeline");

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::domain(e.code(), e.module(), &e)
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
