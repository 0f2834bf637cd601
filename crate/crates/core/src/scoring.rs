//! Chicago Quantum Net Score (CQNS), its calibration, and the Sharpe ratio.
//!
//! All portfolios are equally weighted: for a selection of `k` assets the
//! per-asset expected contribution is `mu_i / k`, the portfolio mean is the
//! arithmetic mean of the held `mu_i`, and the variance is
//! `(1/k^2) * sum_{i,j in P} cov_ij`. Moments are per trading day.
//!
//! Two score forms exist. The final form subtracts a power of the portfolio
//! mean, `Var[P] - (sum_i E[P_i])^w`. The legacy form subtracts the sum of
//! per-asset powers, `Var[P] - sum_i E[P_i]^w`; it is separable and is the
//! one compiled into QUBOs. Lower is better for both.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::Universe;
use crate::portfolio::Portfolio;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("portfolio holds no assets")]
    EmptyPortfolio,
    #[error("portfolio has length {got}, universe has {expected} assets")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative base {base:e} raised to non-integer power {power}")]
    NegativeBaseNonIntegerPower { base: f64, power: f64 },
    #[error("cannot calibrate CQNS power: {0}")]
    DegenerateCalibration(String),
    #[error("portfolio variance is zero")]
    ZeroVariancePortfolio,
    #[error("CQNS power must be finite and positive, got {0}")]
    InvalidPower(f64),
}

impl ScoringError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyPortfolio => "EmptyPortfolio",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::NegativeBaseNonIntegerPower { .. } => "NegativeBaseNonIntegerPower",
            Self::DegenerateCalibration(_) => "DegenerateCalibration",
            Self::ZeroVariancePortfolio => "ZeroVariancePortfolio",
            Self::InvalidPower(_) => "InvalidPower",
        }
    }
}

pub type Result<T, E = ScoringError> = std::result::Result<T, E>;

/// Exponent applied to expected return in the CQNS.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CqnsPower(f64);

impl CqnsPower {
    /// The uncalibrated cubic form.
    pub const CUBIC: CqnsPower = CqnsPower(3.0);

    pub fn new(w: f64) -> Result<Self> {
        if w.is_finite() && w > 0.0 {
            Ok(Self(w))
        } else {
            Err(ScoringError::InvalidPower(w))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0.fract() == 0.0
    }
}

impl Default for CqnsPower {
    fn default() -> Self {
        Self::CUBIC
    }
}

impl TryFrom<f64> for CqnsPower {
    type Error = ScoringError;

    fn try_from(w: f64) -> Result<Self> {
        Self::new(w)
    }
}

impl From<CqnsPower> for f64 {
    fn from(p: CqnsPower) -> f64 {
        p.0
    }
}

/// `base^w` when it is real.
pub fn real_pow(base: f64, w: CqnsPower) -> Result<f64> {
    if base < 0.0 && !w.is_integer() {
        return Err(ScoringError::NegativeBaseNonIntegerPower { base, power: w.0 });
    }
    Ok(base.powf(w.0))
}

/// `base^w`, extended to negative bases with non-integer `w` as `-(|base|^w)`.
/// Equal to [`real_pow`] wherever that is defined.
pub fn extended_pow(base: f64, w: CqnsPower) -> f64 {
    if base < 0.0 && !w.is_integer() {
        -(-base).powf(w.0)
    } else {
        base.powf(w.0)
    }
}

/// `variance - mean^w`, with differences inside the rounding noise of the
/// reward term reported as exactly 0. The noise bound is 4 ulps of the larger
/// operand times the condition number of `mean^w` in `w` and `mean`, since
/// `w` itself is only known to an ulp. A calibrated all-in portfolio would
/// otherwise score about 1e-20 instead of 0.
fn net(variance: f64, mean: f64, reward: f64, w: CqnsPower) -> f64 {
    let d = variance - reward;
    let cond = if mean == 0.0 { 1.0 } else { 1.0 + w.0 * (1.0 + mean.abs().ln().abs()) };
    if d.abs() <= 4.0 * f64::EPSILON * cond * variance.abs().max(reward.abs()) {
        0.0
    } else {
        d
    }
}

/// CQNS from precomputed moments.
pub fn cqns_from_moments(variance: f64, mean: f64, w: CqnsPower) -> Result<f64> {
    Ok(net(variance, mean, real_pow(mean, w)?, w))
}

/// Total objective solvers search on: equals [`cqns_from_moments`] whenever
/// that is defined, and extends it to negative means with non-integer `w`
/// (such portfolios then score above their variance, i.e. unattractive).
pub fn search_score(variance: f64, mean: f64, w: CqnsPower) -> f64 {
    net(variance, mean, extended_pow(mean, w), w)
}

pub fn sharpe_from_moments(variance: f64, mean: f64, risk_free: f64) -> Result<f64> {
    if variance <= 0.0 || !variance.is_finite() {
        return Err(ScoringError::ZeroVariancePortfolio);
    }
    Ok((mean - risk_free) / variance.sqrt())
}

/// Ascending comparator shared by every solver: more negative is better.
pub fn compare_scores(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

fn check(u: &Universe, p: &Portfolio) -> Result<usize> {
    if p.len() != u.n() {
        return Err(ScoringError::DimensionMismatch { expected: u.n(), got: p.len() });
    }
    match p.cardinality() {
        0 => Err(ScoringError::EmptyPortfolio),
        k => Ok(k),
    }
}

/// Equal-weight mean of the held assets' mean returns.
pub fn portfolio_mean(u: &Universe, p: &Portfolio) -> Result<f64> {
    let k = check(u, p)?;
    let mu = u.mu();
    Ok(p.indices().map(|i| mu[i]).sum::<f64>() / k as f64)
}

/// Equal-weight variance `(1/k^2) sum_{i,j in P} cov_ij`.
pub fn portfolio_variance(u: &Universe, p: &Portfolio) -> Result<f64> {
    let k = check(u, p)?;
    Ok(selected_cov_sum(u, p) / (k * k) as f64)
}

/// `sum_{i,j in P} cov_ij`, summed row by row in index order.
pub(crate) fn selected_cov_sum(u: &Universe, p: &Portfolio) -> f64 {
    let idx: Vec<usize> = p.indices().collect();
    let cov = u.cov();
    idx.iter()
        .map(|&i| {
            let row = cov.row(i);
            idx.iter().map(|&j| row[j]).sum::<f64>()
        })
        .sum()
}

/// `Var[P] - (mean P)^w`.
pub fn cqns_final(u: &Universe, p: &Portfolio, w: CqnsPower) -> Result<f64> {
    cqns_from_moments(portfolio_variance(u, p)?, portfolio_mean(u, p)?, w)
}

/// `Var[P] - sum_{i in P} (mu_i / k)^w` with `k = |P|`.
pub fn cqns_legacy(u: &Universe, p: &Portfolio, w: CqnsPower) -> Result<f64> {
    let k = check(u, p)?;
    cqns_legacy_at(u, p, w, k)
}

/// Legacy CQNS with the equal-weight normalization pinned to `k_norm`
/// regardless of `|P|`: `(1/k_norm^2) sum cov_ij - sum (mu_i / k_norm)^w`.
/// This is exactly the unpenalized part of the compiled QUBO; it equals
/// [`cqns_legacy`] when `|P| = k_norm`. The empty selection scores 0.
pub fn cqns_legacy_at(u: &Universe, p: &Portfolio, w: CqnsPower, k_norm: usize) -> Result<f64> {
    if p.len() != u.n() {
        return Err(ScoringError::DimensionMismatch { expected: u.n(), got: p.len() });
    }
    if k_norm == 0 {
        return Err(ScoringError::EmptyPortfolio);
    }
    let kf = k_norm as f64;
    let var = selected_cov_sum(u, p) / (kf * kf);
    let mu = u.mu();
    let mut linear = 0.0;
    for i in p.indices() {
        linear += real_pow(mu[i] / kf, w)?;
    }
    Ok(var - linear)
}

/// `(mean - risk_free) / sqrt(Var)`.
pub fn sharpe(u: &Universe, p: &Portfolio, risk_free: f64) -> Result<f64> {
    sharpe_from_moments(portfolio_variance(u, p)?, portfolio_mean(u, p)?, risk_free)
}

/// `w = ln(Var_all) / ln(E_all)` on the all-in portfolio, so that the all-in
/// CQNS is zero.
///
/// Among the floating-point neighbours of the quotient the one that makes
/// `E_all^w` closest to `Var_all` is returned, which usually drives the
/// all-in score to exactly 0.
pub fn calibrate_power(u: &Universe) -> Result<CqnsPower> {
    let all = Portfolio::full(u.n());
    let var = portfolio_variance(u, &all)?;
    let mean = portfolio_mean(u, &all)?;
    calibrate_from_moments(var, mean)
}

pub fn calibrate_from_moments(var: f64, mean: f64) -> Result<CqnsPower> {
    if !(var > 0.0) {
        return Err(ScoringError::DegenerateCalibration(format!("all-in variance {var:e} is not positive")));
    }
    if !(mean > 0.0) {
        return Err(ScoringError::DegenerateCalibration(format!("all-in mean {mean:e} is not positive")));
    }
    if mean == 1.0 {
        return Err(ScoringError::DegenerateCalibration("all-in mean is exactly 1".into()));
    }
    let w0 = var.ln() / mean.ln();
    if !(w0.is_finite() && w0 > 0.0) {
        return Err(ScoringError::DegenerateCalibration(format!("ln(Var)/ln(E) = {w0} is not a positive power")));
    }
    let residual = |w: f64| (var - mean.powf(w)).abs();
    let mut best = (residual(w0), w0);
    for dir in [1.0f64, -1.0] {
        let mut w = w0;
        for _ in 0..16 {
            w = next_toward(w, dir);
            let r = residual(w);
            if r < best.0 {
                best = (r, w);
            }
        }
    }
    CqnsPower::new(best.1)
}

fn next_toward(x: f64, dir: f64) -> f64 {
    // Positive finite x only.
    let bits = x.to_bits();
    f64::from_bits(if dir > 0.0 { bits + 1 } else { bits - 1 })
}

/// Calibrates, falling back to the cubic power when the universe cannot be
/// calibrated. The error is returned alongside so callers can surface it.
pub fn calibrate_power_or_cubic(u: &Universe) -> (CqnsPower, Option<ScoringError>) {
    match calibrate_power(u) {
        Ok(w) => (w, None),
        Err(e) => {
            log::warn!("{e}; falling back to w = 3");
            (CqnsPower::CUBIC, Some(e))
        }
    }
}

/// Everything reported about one portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub cqns_final: f64,
    /// `None` when a held asset has a negative mean and the power is not an integer.
    pub cqns_legacy: Option<f64>,
    pub expected_return: f64,
    pub variance: f64,
    /// `None` for zero-variance portfolios.
    pub sharpe: Option<f64>,
    pub power_used: f64,
}

pub fn score_report(u: &Universe, p: &Portfolio, w: CqnsPower, risk_free: f64) -> Result<ScoreReport> {
    let variance = portfolio_variance(u, p)?;
    let expected_return = portfolio_mean(u, p)?;
    Ok(ScoreReport {
        cqns_final: cqns_from_moments(variance, expected_return, w)?,
        cqns_legacy: cqns_legacy(u, p, w).ok(),
        expected_return,
        variance,
        sharpe: sharpe_from_moments(variance, expected_return, risk_free).ok(),
        power_used: w.value(),
    })
}
