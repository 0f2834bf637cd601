use cqns_core::scoring::{
    calibrate_from_moments, calibrate_power, compare_scores, cqns_final, cqns_from_moments, cqns_legacy,
    portfolio_mean, portfolio_variance, score_report, sharpe, sharpe_from_moments, ScoringError,
};
use cqns_core::synthetic::synthetic_universe;
use cqns_core::{CqnsPower, DenseMatrix, Portfolio, Universe};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn universe_from_rows(rows: &[Vec<f64>]) -> Universe {
    let n = rows.len();
    let t = rows[0].len();
    let tickers = (0..n).map(|i| format!("A{i}")).collect();
    let index: Vec<f64> =
        (0..t).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64 + 1e-3 * (j % 3) as f64).collect();
    Universe::from_returns(tickers, DenseMatrix::from_rows(rows), index).unwrap()
}

fn random_universe(n: usize, t: usize, seed: u64) -> Universe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let drift = rng.random_range(-1e-3..3e-3);
            (0..t).map(|_| drift + rng.random_range(-0.03..0.03)).collect()
        })
        .collect();
    universe_from_rows(&rows)
}

/// Direct double sum over the held assets.
fn oracle_moments(u: &Universe, p: &Portfolio) -> (f64, f64) {
    let idx: Vec<usize> = p.indices().collect();
    let k = idx.len() as f64;
    let mut var = 0.0;
    for &i in &idx {
        for &j in &idx {
            var += u.cov()[(i, j)];
        }
    }
    let mean = idx.iter().map(|&i| u.mu()[i]).sum::<f64>() / k;
    (var / (k * k), mean)
}

#[test]
fn all_in_scores_zero_under_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 50 {
        seed += 1;
        let n = rng.random_range(5..=200);
        let u = synthetic_universe(n, 120, seed);
        let all = Portfolio::full(n);
        if portfolio_mean(&u, &all).unwrap() <= 0.0 {
            continue;
        }
        let w = calibrate_power(&u).unwrap();
        let s = cqns_final(&u, &all, w).unwrap();
        assert!(s.abs() <= 1e-12, "n = {n}, seed = {seed}: {s:e}");
        checked += 1;
    }
}

#[test]
fn calibration_examples() {
    let w = calibrate_from_moments(1e-4, 1e-2).unwrap();
    assert!((w.value() - 2.0).abs() < 1e-12);
    let w = calibrate_from_moments(0.2, 0.2).unwrap();
    assert!((w.value() - 1.0).abs() < 1e-12);
    for (v, m) in [(0.0, 0.1), (0.1, 0.0), (0.1, -0.1), (0.1, 1.0)] {
        assert!(matches!(calibrate_from_moments(v, m), Err(ScoringError::DegenerateCalibration(_))), "{v} {m}");
    }
}

#[test]
fn moment_examples() {
    let u = universe_from_rows(&[vec![0.01, 0.01, 0.02, 0.0], vec![0.03, 0.02, 0.04, 0.03], vec![0.0, 0.1, -0.1, 0.0]]);
    let p01 = Portfolio::from_indices(3, [0, 1]);
    assert!((portfolio_mean(&u, &p01).unwrap() - (u.mu()[0] + u.mu()[1]) / 2.0).abs() < 1e-18);
    let single = Portfolio::from_indices(3, [2]);
    assert_eq!(portfolio_mean(&u, &single).unwrap(), u.mu()[2]);
    assert_eq!(portfolio_variance(&u, &single).unwrap(), u.cov()[(2, 2)]);
    let all = Portfolio::full(3);
    let (v, m) = oracle_moments(&u, &all);
    assert!((portfolio_variance(&u, &all).unwrap() - v).abs() < 1e-18);
    assert!((portfolio_mean(&u, &all).unwrap() - m).abs() < 1e-18);
    let w = CqnsPower::CUBIC;
    assert!((cqns_final(&u, &all, w).unwrap() - (v - m.powi(3))).abs() < 1e-18);
    assert!(matches!(portfolio_mean(&u, &Portfolio::empty(3)), Err(ScoringError::EmptyPortfolio)));
    assert!(matches!(portfolio_mean(&u, &Portfolio::empty(4)), Err(ScoringError::DimensionMismatch { .. })));
}

#[test]
fn zero_returns_score_zero() {
    let u = universe_from_rows(&[vec![0.0; 5], vec![0.0; 5]]);
    let p = Portfolio::full(2);
    for w in [0.5, 1.0, 2.7, 3.0] {
        assert_eq!(cqns_final(&u, &p, CqnsPower::new(w).unwrap()).unwrap(), 0.0);
    }
    assert_eq!(portfolio_mean(&u, &p).unwrap(), 0.0);
}

#[test]
fn legacy_and_final_differ_for_two_equal_means() {
    // Two assets, same mean, different noise.
    let u = universe_from_rows(&[vec![0.01, 0.03, 0.02], vec![0.03, 0.01, 0.02]]);
    let mu = u.mu()[0];
    assert!((u.mu()[1] - mu).abs() < 1e-18);
    let p = Portfolio::full(2);
    let var = portfolio_variance(&u, &p).unwrap();
    let legacy = cqns_legacy(&u, &p, CqnsPower::CUBIC).unwrap();
    let fin = cqns_final(&u, &p, CqnsPower::CUBIC).unwrap();
    assert!((legacy - (var - 2.0 * (mu / 2.0).powi(3))).abs() < 1e-18);
    assert!((fin - (var - mu.powi(3))).abs() < 1e-18);
    assert!(legacy != fin);
}

#[test]
fn negative_mean_with_fractional_power_is_an_error() {
    let u = universe_from_rows(&[vec![-0.01, -0.03, -0.02], vec![-0.03, -0.01, -0.02]]);
    let p = Portfolio::full(2);
    let w = CqnsPower::new(2.5).unwrap();
    assert!(matches!(cqns_final(&u, &p, w), Err(ScoringError::NegativeBaseNonIntegerPower { .. })));
    assert!(cqns_final(&u, &p, CqnsPower::CUBIC).is_ok());
    let r = score_report(&u, &p, CqnsPower::CUBIC, 0.0).unwrap();
    assert!(r.cqns_legacy.is_some());
}

#[test]
fn sharpe_examples() {
    assert_eq!(sharpe_from_moments(0.5, 0.001, 0.001).unwrap(), 0.0);
    assert!((sharpe_from_moments(1e-4, 0.02, 0.0).unwrap() - 2.0).abs() < 1e-12);
    assert!(matches!(sharpe_from_moments(0.0, 0.1, 0.0), Err(ScoringError::ZeroVariancePortfolio)));
}

#[test]
fn comparator_orders_more_negative_first() {
    let mut v = vec![0.3, -1.0, 0.0, -0.5];
    v.sort_by(|a, b| compare_scores(*a, *b));
    assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.3]);
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn legacy_equals_final_for_single_assets(seed in any::<u64>(), i in 0usize..6) {
        let u = random_universe(6, 30, seed);
        let p = Portfolio::from_indices(6, [i]);
        let w = CqnsPower::CUBIC;
        prop_assert_eq!(cqns_legacy(&u, &p, w).unwrap(), cqns_final(&u, &p, w).unwrap());
    }

    #[test]
    fn moments_match_double_sum(seed in any::<u64>(), mask in 1u32..256) {
        let u = random_universe(8, 25, seed);
        let p = Portfolio::from_indices(8, (0..8).filter(|i| mask >> i & 1 == 1));
        let (v, m) = oracle_moments(&u, &p);
        prop_assert!((portfolio_variance(&u, &p).unwrap() - v).abs() <= 1e-15 * v.abs().max(1e-6));
        prop_assert!((portfolio_mean(&u, &p).unwrap() - m).abs() <= 1e-17);
        prop_assert!(portfolio_variance(&u, &p).unwrap() >= 0.0);
    }

    #[test]
    fn scores_invariant_under_relabeling(seed in any::<u64>(), mask in 1u32..128, rot in 1usize..7) {
        let n = 7;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..20).map(|_| 1e-3 + rng.random_range(-0.02..0.02)).collect()).collect();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let (u, v) = (universe_from_rows(&rows), universe_from_rows(&permuted));
        let p = Portfolio::from_indices(n, (0..n).filter(|i| mask >> i & 1 == 1));
        // Asset i of u sits at position j of v where perm[j] = i.
        let q = Portfolio::from_indices(n, (0..n).filter(|&j| p.contains(perm[j])));
        let w = CqnsPower::CUBIC;
        let (a, b) = (cqns_final(&u, &p, w).unwrap(), cqns_final(&v, &q, w).unwrap());
        prop_assert!((a - b).abs() <= 1e-15);
        let (a, b) = (cqns_legacy(&u, &p, w).unwrap(), cqns_legacy(&v, &q, w).unwrap());
        prop_assert!((a - b).abs() <= 1e-15);
    }

    #[test]
    fn sharpe_increases_with_a_held_mean(seed in any::<u64>(), bump in 1e-5f64..1e-2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<f64>> = (0..4).map(|_| (0..20).map(|_| rng.random_range(-0.02..0.02)).collect()).collect();
        let p = Portfolio::from_indices(4, [0, 2]);
        let before = sharpe(&universe_from_rows(&rows), &p, 0.0).unwrap();
        // A constant shift moves mu but leaves the covariance alone.
        for v in rows[0].iter_mut() {
            *v += bump;
        }
        let after = sharpe(&universe_from_rows(&rows), &p, 0.0).unwrap();
        prop_assert!(after > before);
    }

    #[test]
    fn calibrated_all_in_is_zero_on_random_rows(seed in any::<u64>(), n in 2usize..40) {
        let u = random_universe(n, 60, seed);
        let all = Portfolio::full(n);
        let m = portfolio_mean(&u, &all).unwrap();
        prop_assume!(m > 0.0 && m < 1.0);
        let w = calibrate_power(&u).unwrap();
        prop_assert_eq!(cqns_final(&u, &all, w).unwrap(), 0.0);
        prop_assert_eq!(cqns_from_moments(portfolio_variance(&u, &all).unwrap(), m, w).unwrap(), 0.0);
    }
}
