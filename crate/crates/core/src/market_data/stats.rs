use nalgebra::DMatrix;

use super::{MarketDataError, PriceSeries, Result};
use crate::matrix::DenseMatrix;
use crate::parallel::{self, ExecMode};

/// Daily simple returns `p[t+1] / p[t] - 1` of a fully observed, positive series.
pub fn compute_returns(series: &PriceSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(MarketDataError::SeriesTooShort { ticker: series.ticker.clone(), len: series.len() });
    }
    let mut prices = Vec::with_capacity(series.len());
    for (date, p) in series.dates.iter().zip(&series.adj_close) {
        match p {
            None => return Err(MarketDataError::MissingPrice { ticker: series.ticker.clone(), date: *date }),
            Some(p) if *p <= 0.0 => {
                return Err(MarketDataError::NonPositivePrice { ticker: series.ticker.clone(), date: *date })
            }
            Some(p) => prices.push(*p),
        }
    }
    Ok(simple_returns(&prices))
}

/// Simple returns of a raw price slice. Caller guarantees positivity.
pub fn simple_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample covariance (denominator `T - 1`) of the rows of an `N x T` matrix.
pub fn compute_covariance(returns: &DenseMatrix) -> Result<DenseMatrix> {
    compute_covariance_with(returns, ExecMode::default())
}

pub fn compute_covariance_with(returns: &DenseMatrix, mode: ExecMode) -> Result<DenseMatrix> {
    let (n, t) = (returns.rows(), returns.cols());
    if t < 2 {
        return Err(MarketDataError::InsufficientObservations(t));
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row = returns.row(i);
            let m = mean(row);
            row.iter().map(|v| v - m).collect()
        })
        .collect();
    let denom = (t - 1) as f64;
    // Upper triangle only, so each pair is computed once and the result is
    // exactly symmetric.
    let upper: Vec<Vec<f64>> =
        parallel::map_range(mode, n, |i| (i..n).map(|j| parallel::dot(&centered[i], &centered[j]) / denom).collect());
    let mut cov = DenseMatrix::zeros(n, n);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// `1e-8` times the largest diagonal entry.
pub fn default_psd_tolerance(cov: &DenseMatrix) -> f64 {
    1e-8 * cov.diagonal().into_iter().fold(0.0, f64::max)
}

/// Smallest eigenvalue test: PSD iff `lambda_min >= -tol`.
pub fn check_psd(cov: &DenseMatrix, tol: f64) -> Result<PsdCheck> {
    if !cov.is_square() {
        return Err(MarketDataError::DimensionMismatch(format!("{}x{} is not square", cov.rows(), cov.cols())));
    }
    let asym = cov.asymmetry();
    if asym > 1e-12 {
        return Err(MarketDataError::AsymmetricMatrix(asym));
    }
    if cov.rows() == 0 {
        return Ok(PsdCheck { is_psd: true, min_eigenvalue: f64::INFINITY });
    }
    let m = DMatrix::from_row_slice(cov.rows(), cov.cols(), cov.as_slice());
    let min_eigenvalue = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PsdCheck { is_psd: min_eigenvalue >= -tol, min_eigenvalue })
}

/// `beta_i = Cov(r_i, index) / Var(index)`, both with `T - 1` denominators.
pub fn compute_betas(returns: &DenseMatrix, index_returns: &[f64]) -> Result<Vec<f64>> {
    let t = index_returns.len();
    if returns.cols() != t {
        return Err(MarketDataError::DimensionMismatch(format!(
            "returns have {} observations, index has {t}",
            returns.cols()
        )));
    }
    if t < 2 {
        return Err(MarketDataError::InsufficientObservations(t));
    }
    let im = mean(index_returns);
    let centered_index: Vec<f64> = index_returns.iter().map(|v| v - im).collect();
    let var = parallel::dot(&centered_index, &centered_index) / (t - 1) as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(MarketDataError::ZeroVarianceIndex);
    }
    Ok((0..returns.rows())
        .map(|i| {
            let row = returns.row(i);
            let m = mean(row);
            let cov: f64 = row.iter().zip(&centered_index).map(|(r, c)| (r - m) * c).sum::<f64>() / (t - 1) as f64;
            cov / var
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn series(prices: &[f64]) -> PriceSeries {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..prices.len()).map(|i| d0 + chrono::Days::new(i as u64)).collect();
        PriceSeries::from_prices("T", dates, prices).unwrap()
    }

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&series(&[100.0, 110.0])).unwrap().len(), 1);
        assert!((compute_returns(&series(&[100.0, 110.0])).unwrap()[0] - 0.10).abs() < 1e-15);
        assert_eq!(compute_returns(&series(&[50.0, 50.0, 50.0])).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_returns(&series(&[100.0, 50.0, 100.0])).unwrap(), vec![-0.5, 1.0]);
        assert!(matches!(compute_returns(&series(&[1.0])), Err(MarketDataError::SeriesTooShort { .. })));
    }

    #[test]
    fn covariance_examples() {
        let same = DenseMatrix::from_rows(&[[0.1, -0.2, 0.3], [0.1, -0.2, 0.3]]);
        let c = compute_covariance(&same).unwrap();
        let v = c[(0, 0)];
        assert!(c.as_slice().iter().all(|x| *x == v));

        let zero = DenseMatrix::from_rows(&[[0.0, 0.0, 0.0], [0.1, 0.2, -0.1]]);
        let c = compute_covariance(&zero).unwrap();
        assert_eq!((c[(0, 0)], c[(0, 1)], c[(1, 0)]), (0.0, 0.0, 0.0));

        // Hand computation: mean 0, sum of squares 4, T-1 = 3.
        let alt = DenseMatrix::from_rows(&[[1.0, -1.0, 1.0, -1.0], [-1.0, 1.0, -1.0, 1.0]]);
        let c = compute_covariance(&alt).unwrap();
        assert_eq!(c[(0, 0)], 4.0 / 3.0);
        assert_eq!(c[(0, 1)], -4.0 / 3.0);

        let short = DenseMatrix::from_rows(&[[1.0], [2.0]]);
        assert!(matches!(compute_covariance(&short), Err(MarketDataError::InsufficientObservations(1))));
    }

    #[test]
    fn psd_examples() {
        let id = check_psd(&DenseMatrix::identity(3), 1e-9).unwrap();
        assert!(id.is_psd);
        assert!((id.min_eigenvalue - 1.0).abs() < 1e-12);
        let indef = check_psd(&DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]), 1e-9).unwrap();
        assert!(!indef.is_psd);
        assert!((indef.min_eigenvalue + 1.0).abs() < 1e-12);
        let asym = DenseMatrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]);
        assert!(matches!(check_psd(&asym, 1e-9), Err(MarketDataError::AsymmetricMatrix(_))));
    }

    #[test]
    fn beta_examples() {
        let index = [0.01, -0.02, 0.015, 0.003, -0.007];
        let double: Vec<f64> = index.iter().map(|v| 2.0 * v).collect();
        // Orthogonal to the centered index: centered index is not needed
        // explicitly since a constant row has zero covariance.
        let flat = [0.004; 5];
        let returns = DenseMatrix::from_rows(&[index.to_vec(), double, flat.to_vec()]);
        let b = compute_betas(&returns, &index).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
        assert!(b[2].abs() < 1e-12);
        assert!(matches!(compute_betas(&returns, &[0.0; 5]), Err(MarketDataError::ZeroVarianceIndex)));
    }
}
