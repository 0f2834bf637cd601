//! Price ingestion, universe validation and return statistics.

mod load;
mod stats;
mod universe;
mod validate;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_prices, parse_prices, write_prices, PriceFormat};
pub use stats::{
    check_psd, compute_betas, compute_covariance, compute_covariance_with, compute_returns, default_psd_tolerance,
    mean, simple_returns, PsdCheck,
};
pub use universe::Universe;
pub use validate::{validate_universe, BetaRange, RejectionReason, ValidationReport};

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("cannot read {path}: {reason}")]
    FileUnreadable { path: String, reason: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate date {date} for ticker {ticker}")]
    DuplicateDateForTicker { ticker: String, date: NaiveDate },
    #[error("invalid index series: {0}")]
    InvalidIndexSeries(String),
    #[error("series {ticker} has {len} prices, need at least 2")]
    SeriesTooShort { ticker: String, len: usize },
    #[error("series {ticker} has a missing price on {date}")]
    MissingPrice { ticker: String, date: NaiveDate },
    #[error("series {ticker} has a non-positive price on {date}")]
    NonPositivePrice { ticker: String, date: NaiveDate },
    #[error("covariance needs at least 2 observations, got {0}")]
    InsufficientObservations(usize),
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    AsymmetricMatrix(f64),
    #[error("index returns have zero variance")]
    ZeroVarianceIndex,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("universe needs at least 2 assets, got {0}")]
    TooFewAssets(usize),
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl MarketDataError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::FileUnreadable { .. } => "FileUnreadable",
            Self::MalformedRow { .. } => "MalformedRow",
            Self::DuplicateDateForTicker { .. } => "DuplicateDateForTicker",
            Self::InvalidIndexSeries(_) => "InvalidIndexSeries",
            Self::SeriesTooShort { .. } => "SeriesTooShort",
            Self::MissingPrice { .. } => "MissingPrice",
            Self::NonPositivePrice { .. } => "NonPositivePrice",
            Self::InsufficientObservations(_) => "InsufficientObservations",
            Self::AsymmetricMatrix(_) => "AsymmetricMatrix",
            Self::ZeroVarianceIndex => "ZeroVarianceIndex",
            Self::DimensionMismatch(_) => "DimensionMismatch",
            Self::TooFewAssets(_) => "TooFewAssets",
            Self::NotPositiveSemidefinite { .. } => "NotPositiveSemidefinite",
            Self::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

/// Adjusted closing prices for one ticker. `None` marks a missing price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub adj_close: Vec<Option<f64>>,
}

impl PriceSeries {
    /// Builds a series, sorting by date. Fails on duplicate dates,
    /// length mismatch or non-finite prices.
    pub fn new(ticker: impl Into<String>, dates: Vec<NaiveDate>, adj_close: Vec<Option<f64>>) -> Result<Self> {
        let ticker = ticker.into();
        if dates.len() != adj_close.len() {
            return Err(MarketDataError::DimensionMismatch(format!(
                "{ticker}: {} dates vs {} prices",
                dates.len(),
                adj_close.len()
            )));
        }
        if adj_close.iter().flatten().any(|p| !p.is_finite()) {
            return Err(MarketDataError::InvalidArgument(format!("{ticker}: non-finite price")));
        }
        let mut rows: Vec<_> = dates.into_iter().zip(adj_close).collect();
        rows.sort_by_key(|(d, _)| *d);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MarketDataError::DuplicateDateForTicker { ticker, date: w[0].0 });
        }
        let (dates, adj_close) = rows.into_iter().unzip();
        Ok(Self { ticker, dates, adj_close })
    }

    /// Convenience constructor for fully observed series.
    pub fn from_prices(ticker: impl Into<String>, dates: Vec<NaiveDate>, prices: &[f64]) -> Result<Self> {
        Self::new(ticker, dates, prices.iter().copied().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn price_on(&self, date: NaiveDate) -> Option<Option<f64>> {
        self.dates.binary_search(&date).ok().map(|i| self.adj_close[i])
    }
}
