use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::stats::{compute_betas, simple_returns};
use super::{MarketDataError, PriceSeries, Result};
use crate::matrix::DenseMatrix;

/// Why a ticker was dropped. Checked in declaration order; the first failing
/// rule is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectionReason {
    DownloadFailed,
    NegativePrice,
    MissingPrice,
    IncompleteHistory,
    NegativeBeta,
    BetaOutOfRange,
}

/// Closed interval of admissible betas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRange {
    pub min: f64,
    pub max: f64,
}

impl Default for BetaRange {
    /// Drops only negative-beta assets.
    fn default() -> Self {
        Self { min: 0.0, max: f64::INFINITY }
    }
}

impl BetaRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if min.is_nan() || max.is_nan() || min > max {
            return Err(MarketDataError::InvalidArgument(format!("invalid beta range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    fn classify(&self, beta: f64) -> Option<RejectionReason> {
        if beta < self.min {
            Some(if beta < 0.0 { RejectionReason::NegativeBeta } else { RejectionReason::BetaOutOfRange })
        } else if beta > self.max {
            Some(RejectionReason::BetaOutOfRange)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted: Vec<String>,
    pub rejected: BTreeMap<String, RejectionReason>,
}

/// The trailing `expected_days` trading dates of the index.
pub(crate) fn index_window(index: &PriceSeries, expected_days: usize) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    if expected_days < 2 {
        return Err(MarketDataError::InvalidArgument(format!("expected_days must be >= 2, got {expected_days}")));
    }
    let mut prices = Vec::with_capacity(index.len());
    for (d, p) in index.dates.iter().zip(&index.adj_close) {
        match p {
            None => return Err(MarketDataError::InvalidIndexSeries(format!("missing price on {d}"))),
            Some(p) if *p <= 0.0 => {
                return Err(MarketDataError::InvalidIndexSeries(format!("non-positive price on {d}")))
            }
            Some(p) => prices.push(*p),
        }
    }
    if index.len() < expected_days {
        return Err(MarketDataError::InvalidIndexSeries(format!(
            "index has {} trading days, expected {expected_days}",
            index.len()
        )));
    }
    let start = index.len() - expected_days;
    Ok((index.dates[start..].to_vec(), prices[start..].to_vec()))
}

/// Prices of `series` on every window date, or `None` if any date is absent.
pub(crate) fn align(series: &PriceSeries, window: &[NaiveDate]) -> Option<Vec<f64>> {
    window.iter().map(|d| series.price_on(*d).flatten()).collect()
}

fn price_rule(series: &PriceSeries) -> Option<RejectionReason> {
    if series.is_empty() || series.adj_close.iter().all(Option::is_none) {
        return Some(RejectionReason::DownloadFailed);
    }
    if series.adj_close.iter().flatten().any(|p| *p <= 0.0) {
        return Some(RejectionReason::NegativePrice);
    }
    if series.adj_close.iter().any(Option::is_none) {
        return Some(RejectionReason::MissingPrice);
    }
    None
}

/// Applies the data-quality rules to every series.
///
/// The window is the index's last `expected_days` trading days; a ticker has
/// a complete history iff it carries a price on each of those dates. Betas
/// are estimated on that window against the index's simple returns.
pub fn validate_universe(
    series: &BTreeMap<String, PriceSeries>,
    expected_days: usize,
    beta_range: BetaRange,
    index: &PriceSeries,
) -> Result<ValidationReport> {
    let (window, index_prices) = index_window(index, expected_days)?;
    let index_returns = simple_returns(&index_prices);

    let mut accepted = Vec::new();
    let mut rejected = BTreeMap::new();
    for (ticker, s) in series {
        if let Some(reason) = price_rule(s) {
            rejected.insert(ticker.clone(), reason);
            continue;
        }
        let Some(prices) = align(s, &window) else {
            rejected.insert(ticker.clone(), RejectionReason::IncompleteHistory);
            continue;
        };
        let returns = DenseMatrix::from_rows(&[simple_returns(&prices)]);
        let beta = compute_betas(&returns, &index_returns)?[0];
        match beta_range.classify(beta) {
            Some(reason) => {
                rejected.insert(ticker.clone(), reason);
            }
            None => accepted.push(ticker.clone()),
        }
    }
    Ok(ValidationReport { accepted, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Days::new(i as u64)).collect()
    }

    fn index() -> PriceSeries {
        let p: Vec<f64> = (0..10).map(|i| 100.0 + ((i * 7) % 5) as f64).collect();
        PriceSeries::from_prices("IDX", dates(10), &p).unwrap()
    }

    #[test]
    fn precedence_is_price_then_history_then_beta() {
        let mut m = BTreeMap::new();
        // Negative price and a gap: NegativePrice wins.
        let mut p: Vec<Option<f64>> = (0..9).map(|i| Some(10.0 + i as f64)).collect();
        p[3] = Some(-1.0);
        m.insert("NEG".to_string(), PriceSeries::new("NEG", dates(9), p).unwrap());
        let r = validate_universe(&m, 10, BetaRange::default(), &index()).unwrap();
        assert_eq!(r.rejected["NEG"], RejectionReason::NegativePrice);
    }

    #[test]
    fn missing_index_price_is_an_error() {
        let mut idx = index();
        idx.adj_close[2] = None;
        assert!(matches!(
            validate_universe(&BTreeMap::new(), 10, BetaRange::default(), &idx),
            Err(MarketDataError::InvalidIndexSeries(_))
        ));
    }

    #[test]
    fn beta_classification() {
        let r = BetaRange::new(0.5, 1.5).unwrap();
        assert_eq!(r.classify(-0.1), Some(RejectionReason::NegativeBeta));
        assert_eq!(r.classify(0.2), Some(RejectionReason::BetaOutOfRange));
        assert_eq!(r.classify(2.0), Some(RejectionReason::BetaOutOfRange));
        assert_eq!(r.classify(1.0), None);
        assert!(BetaRange::new(2.0, 1.0).is_err());
    }
}
