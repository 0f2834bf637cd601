//! Seeded generators for synthetic universes and random QUBO/Ising instances.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::market_data::{PriceSeries, Universe};
use crate::matrix::DenseMatrix;
use crate::qubo::{IsingModel, Qubo};

/// One-factor market model: `r_it = beta_i m_t + e_it`, with every asset's
/// sample mean pinned to a positive target in `[2e-4, 2e-3]`.
#[derive(Debug, Clone)]
pub struct SyntheticReturns {
    pub tickers: Vec<String>,
    pub returns: DenseMatrix,
    pub index_returns: Vec<f64>,
}

pub fn synthetic_returns(n_assets: usize, n_days: usize, seed: u64) -> SyntheticReturns {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let market = Normal::new(4e-4, 1e-2).unwrap();
    let index_returns: Vec<f64> = (0..n_days).map(|_| market.sample(&mut rng)).collect();
    let mut rows = Vec::with_capacity(n_assets);
    for _ in 0..n_assets {
        let beta = rng.random_range(0.5..1.5);
        let idio = Normal::new(0.0, rng.random_range(0.01..0.03)).unwrap();
        let target = rng.random_range(2e-4..2e-3);
        let mut row: Vec<f64> = index_returns.iter().map(|m| beta * m + idio.sample(&mut rng)).collect();
        let shift = target - row.iter().sum::<f64>() / n_days as f64;
        row.iter_mut().for_each(|r| *r += shift);
        rows.push(row);
    }
    SyntheticReturns {
        tickers: (0..n_assets).map(|i| format!("S{i:04}")).collect(),
        returns: DenseMatrix::from_rows(&rows),
        index_returns,
    }
}

/// A valid synthetic [`Universe`] with a positive all-in mean.
pub fn synthetic_universe(n_assets: usize, n_days: usize, seed: u64) -> Universe {
    let s = synthetic_returns(n_assets, n_days, seed);
    Universe::from_returns(s.tickers, s.returns, s.index_returns).expect("synthetic returns form a valid universe")
}

/// Consecutive weekdays starting at `start` (inclusive if a weekday).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Price paths (starting at 100) realizing [`synthetic_returns`], plus the
/// index path. `n_days` returns give `n_days + 1` prices.
pub fn synthetic_prices(
    n_assets: usize,
    n_days: usize,
    seed: u64,
    start: NaiveDate,
) -> (BTreeMap<String, PriceSeries>, PriceSeries) {
    let s = synthetic_returns(n_assets, n_days, seed);
    let dates = business_days(start, n_days + 1);
    let path = |rets: &[f64]| {
        let mut p = vec![100.0];
        for r in rets {
            let last = *p.last().unwrap();
            p.push(last * (1.0 + r));
        }
        p
    };
    let series = s
        .tickers
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), PriceSeries::from_prices(t.clone(), dates.clone(), &path(s.returns.row(i))).unwrap()))
        .collect();
    let index = PriceSeries::from_prices("INDEX", dates, &path(&s.index_returns)).unwrap();
    (series, index)
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng, zero_diagonal: bool) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if i == j && zero_diagonal {
                continue;
            }
            let v = rng.random_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Dense QUBO with coefficients uniform in `[-1, 1)`.
pub fn random_qubo(n: usize, seed: u64) -> Qubo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_symmetric(n, &mut rng, false);
    let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let k1 = rng.random_range(-1.0..1.0);
    Qubo::new(a, b, k1).unwrap()
}

/// Dense spin glass: couplings and fields uniform in `[-1, 1)`.
pub fn random_ising(n: usize, seed: u64) -> IsingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = random_symmetric(n, &mut rng, true);
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    IsingModel::new(j, c, 0.0).unwrap()
}

/// Field-only model (`J = 0`), fields uniform in `[-1, 1)` away from zero.
pub fn random_field_only(n: usize, seed: u64) -> IsingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..n)
        .map(|_| {
            let mag = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    IsingModel::new(DenseMatrix::zeros(n, n), c, 0.0).unwrap()
}
