use std::collections::BTreeMap;

use super::stats::{check_psd, compute_betas, compute_covariance_with, default_psd_tolerance, mean, simple_returns};
use super::validate::{align, index_window};
use super::{MarketDataError, PriceSeries, Result, ValidationReport};
use crate::matrix::DenseMatrix;
use crate::parallel::ExecMode;

/// A validated asset set with its return statistics. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    tickers: Vec<String>,
    returns: DenseMatrix,
    mu: Vec<f64>,
    cov: DenseMatrix,
    betas: Vec<f64>,
    index_returns: Vec<f64>,
}

impl Universe {
    /// Builds from an `N x T` return matrix; computes `mu`, the sample
    /// covariance and betas, and rejects non-PSD covariances.
    pub fn from_returns(tickers: Vec<String>, returns: DenseMatrix, index_returns: Vec<f64>) -> Result<Self> {
        Self::from_returns_with(tickers, returns, index_returns, ExecMode::default())
    }

    pub fn from_returns_with(
        tickers: Vec<String>,
        returns: DenseMatrix,
        index_returns: Vec<f64>,
        mode: ExecMode,
    ) -> Result<Self> {
        let n = returns.rows();
        if n < 2 {
            return Err(MarketDataError::TooFewAssets(n));
        }
        if tickers.len() != n {
            return Err(MarketDataError::DimensionMismatch(format!("{} tickers for {n} return rows", tickers.len())));
        }
        if !returns.all_finite() || index_returns.iter().any(|v| !v.is_finite()) {
            return Err(MarketDataError::InvalidArgument("non-finite return".into()));
        }
        let cov = compute_covariance_with(&returns, mode)?;
        let tol = default_psd_tolerance(&cov);
        let psd = check_psd(&cov, tol)?;
        if !psd.is_psd {
            return Err(MarketDataError::NotPositiveSemidefinite {
                min_eigenvalue: psd.min_eigenvalue,
                tolerance: tol,
            });
        }
        let betas = compute_betas(&returns, &index_returns)?;
        let mu = (0..n).map(|i| mean(returns.row(i))).collect();
        Ok(Self { tickers, returns, mu, cov, betas, index_returns })
    }

    /// Builds from the accepted tickers of a validation report, aligned on the
    /// index's trailing `expected_days` window.
    pub fn from_validated(
        series: &BTreeMap<String, PriceSeries>,
        report: &ValidationReport,
        index: &PriceSeries,
        expected_days: usize,
    ) -> Result<Self> {
        let (window, index_prices) = index_window(index, expected_days)?;
        let mut rows = Vec::with_capacity(report.accepted.len());
        for t in &report.accepted {
            let s = series
                .get(t)
                .ok_or_else(|| MarketDataError::InvalidArgument(format!("accepted ticker {t} has no series")))?;
            let prices = align(s, &window).ok_or_else(|| {
                MarketDataError::InvalidArgument(format!("accepted ticker {t} does not cover the window"))
            })?;
            rows.push(simple_returns(&prices));
        }
        if rows.len() < 2 {
            return Err(MarketDataError::TooFewAssets(rows.len()));
        }
        Self::from_returns(report.accepted.clone(), DenseMatrix::from_rows(&rows), simple_returns(&index_prices))
    }

    /// The universe restricted to `indices`, in that order. Statistics are
    /// sliced, not re-estimated, so scores agree bit-for-bit with the parent.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(MarketDataError::TooFewAssets(indices.len()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(MarketDataError::InvalidArgument(format!("asset index {bad} out of range")));
        }
        let rows: Vec<&[f64]> = indices.iter().map(|&i| self.returns.row(i)).collect();
        Ok(Self {
            tickers: indices.iter().map(|&i| self.tickers[i].clone()).collect(),
            returns: DenseMatrix::from_rows(&rows),
            mu: indices.iter().map(|&i| self.mu[i]).collect(),
            cov: self.cov.select(indices),
            betas: indices.iter().map(|&i| self.betas[i]).collect(),
            index_returns: self.index_returns.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn observations(&self) -> usize {
        self.returns.cols()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &DenseMatrix {
        &self.returns
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn cov(&self) -> &DenseMatrix {
        &self.cov
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn index_returns(&self) -> &[f64] {
        &self.index_returns
    }

    pub fn position(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }
}
