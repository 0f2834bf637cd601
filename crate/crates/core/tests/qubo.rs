use cqns_core::qubo::{
    build_cqns_qubo, export_qubo, import_qubo, ising_energy, qubo_energy, qubo_to_ising, read_qubo, scale_qubo,
    write_qubo, QuboError,
};
use cqns_core::scoring::{calibrate_power, cqns_legacy, cqns_legacy_at};
use cqns_core::synthetic::{random_qubo, synthetic_universe};
use cqns_core::{CqnsPower, DenseMatrix, Portfolio, Qubo, QuboBuildSpec, Universe};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn bits(mask: u32, n: usize) -> Vec<f64> {
    (0..n).map(|i| (mask >> i & 1) as f64).collect()
}

/// `sum_ij A_ij x_i x_j + sum_i B_i x_i + K1`, written out.
fn oracle_energy(q: &Qubo, x: &[f64]) -> f64 {
    let n = q.n();
    let mut e = q.k1();
    for i in 0..n {
        e += q.b()[i] * x[i];
        for j in 0..n {
            e += q.a()[(i, j)] * x[i] * x[j];
        }
    }
    e
}

/// Every bit-vector attaining the minimum (within a relative 1e-12).
fn argmin_set(q: &Qubo) -> (Vec<u32>, f64) {
    let n = q.n();
    let energies: Vec<f64> = (0..1u32 << n).map(|m| oracle_energy(q, &bits(m, n))).collect();
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs().max(1.0);
    ((0..1u32 << n).filter(|&m| energies[m as usize] <= min + tol).collect(), min)
}

fn identity_cov_universe() -> Universe {
    // Orthogonal zero-mean rows with sum of squares 3 = T - 1.
    let s = (3.0f64 / 4.0).sqrt();
    let rows = [[s, -s, s, -s], [s, s, -s, -s]];
    Universe::from_returns(vec!["A".into(), "B".into()], DenseMatrix::from_rows(&rows), vec![0.01, -0.02, 0.0, 0.03])
        .unwrap()
}

#[test]
fn ising_conversion_matches_on_every_bit_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let n = rng.random_range(1..=12);
        let q = random_qubo(n, t);
        let m = qubo_to_ising(&q);
        for mask in 0..1u32 << n {
            let x = bits(mask, n);
            let z: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
            let e = qubo_energy(&q, &x).unwrap();
            assert!((e - oracle_energy(&q, &x)).abs() <= 1e-12);
            worst = worst.max((e - ising_energy(&m, &z).unwrap()).abs());
        }
    }
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn identity_covariance_without_penalty() {
    let u = identity_cov_universe();
    assert!((u.cov()[(0, 0)] - 1.0).abs() < 1e-15 && u.cov()[(0, 1)].abs() < 1e-15);
    let spec = QuboBuildSpec { penalty_lambda: Some(0.0), ..QuboBuildSpec::new(2, CqnsPower::new(1.7).unwrap()) };
    let q = build_cqns_qubo(&u, &spec).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 0.25 } else { 0.0 };
            assert!((q.a()[(i, j)] - want).abs() < 1e-15);
        }
        assert_eq!(q.b()[i], 0.0);
    }
    assert_eq!(q.k1(), 0.0);
}

#[test]
fn energy_matches_legacy_score_plus_penalty() {
    let u = synthetic_universe(10, 80, 5);
    let w = calibrate_power(&u).unwrap();
    let k = 4;
    let spec = QuboBuildSpec::new(k, w);
    let q = build_cqns_qubo(&u, &spec).unwrap();
    // Recover lambda from K1 = lambda k^2.
    let lambda = q.k1() / (k * k) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let mask: u32 = rng.random_range(0..1024);
        let p = Portfolio::from_indices(10, (0..10).filter(|i| mask >> i & 1 == 1));
        let c = p.cardinality() as f64;
        let e = qubo_energy(&q, &p.to_binary()).unwrap();
        let want = cqns_legacy_at(&u, &p, w, k).unwrap() + lambda * (c - k as f64).powi(2);
        assert!((e - want).abs() <= 1e-10, "{e} vs {want}");
        if p.cardinality() == k {
            assert!((e - cqns_legacy(&u, &p, w).unwrap()).abs() <= 1e-10);
        }
    }
}

#[test]
fn large_penalty_forces_cardinality() {
    let u = synthetic_universe(6, 60, 9);
    let spec = QuboBuildSpec { penalty_lambda: Some(1e3), ..QuboBuildSpec::new(3, CqnsPower::CUBIC) };
    let q = build_cqns_qubo(&u, &spec).unwrap();
    let (mut on, mut off) = (f64::NEG_INFINITY, f64::INFINITY);
    for mask in 0..64u32 {
        let e = qubo_energy(&q, &bits(mask, 6)).unwrap();
        if mask.count_ones() == 3 {
            on = on.max(e);
        } else {
            off = off.min(e);
        }
    }
    assert!(on < off, "worst on-cardinality {on} vs best off {off}");
}

#[test]
fn default_penalty_keeps_global_minimum_at_k() {
    let mut sound = 0;
    for seed in 0..50u64 {
        let u = synthetic_universe(12, 100, 700 + seed);
        let w = calibrate_power(&u).unwrap_or(CqnsPower::CUBIC);
        let q = build_cqns_qubo(&u, &QuboBuildSpec::new(4, w)).unwrap();
        let (set, _) = argmin_set(&q);
        if set.iter().all(|m| m.count_ones() == 4) {
            sound += 1;
        }
    }
    println!("penalty soundness: {sound}/50");
    assert!(sound >= 48, "{sound}/50");
}

#[test]
fn build_errors() {
    let u = synthetic_universe(4, 30, 1);
    for k in [0, 5] {
        assert!(matches!(
            build_cqns_qubo(&u, &QuboBuildSpec::new(k, CqnsPower::CUBIC)),
            Err(QuboError::InvalidTargetK { .. })
        ));
    }
    // A negative mean under a fractional power.
    let rows = [[-0.01, -0.02, 0.0, -0.01], [0.01, 0.02, 0.01, 0.0]];
    let v = Universe::from_returns(
        vec!["N".into(), "P".into()],
        DenseMatrix::from_rows(&rows),
        vec![0.01, -0.01, 0.02, 0.0],
    )
    .unwrap();
    let spec = QuboBuildSpec::new(1, CqnsPower::new(1.5).unwrap());
    assert!(matches!(build_cqns_qubo(&v, &spec), Err(QuboError::ComplexPowerTerm { asset: 0, .. })));
    assert!(build_cqns_qubo(&v, &QuboBuildSpec::new(1, CqnsPower::CUBIC)).is_ok());
}

#[test]
fn scaling_preserves_argmin_and_pins_max() {
    for t in 0..50u64 {
        let q = if t % 2 == 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            let f: f64 = rng.random_range(0.01..100.0);
            let base = random_qubo(10, 9000 + t);
            Qubo::new(base.a().scaled(f), base.b().iter().map(|b| b * f).collect(), base.k1() * f).unwrap()
        } else {
            let u = synthetic_universe(10, 60, t);
            build_cqns_qubo(&u, &QuboBuildSpec::new(3, calibrate_power(&u).unwrap())).unwrap()
        };
        let (s, factor) = scale_qubo(&q, 4.0).unwrap();
        assert!((s.max_abs_coefficient() - 4.0).abs() <= 1e-12);
        assert_eq!(s.max_abs_coefficient(), 4.0);
        let (before, _) = argmin_set(&q);
        let (after, _) = argmin_set(&s);
        assert_eq!(before, after, "instance {t}");
        for mask in [0u32, 5, 1023] {
            let x = bits(mask, 10);
            let (a, b) = (qubo_energy(&q, &x).unwrap(), qubo_energy(&s, &x).unwrap() * factor);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn export_round_trip() {
    let u = synthetic_universe(12, 60, 2);
    let q = build_cqns_qubo(&u, &QuboBuildSpec::new(5, calibrate_power(&u).unwrap())).unwrap();
    let (q, _) = scale_qubo(&q, 4.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.qubo");
    export_qubo(&q, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() - 1 <= 12 + 12 * 11 / 2);
    let back = import_qubo(&path).unwrap();
    for mask in 0..1u32 << 12 {
        let x = bits(mask, 12);
        let (a, b) = (qubo_energy(&q, &x).unwrap(), qubo_energy(&back, &x).unwrap());
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
    let mut again = Vec::new();
    write_qubo(&back, &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);
}

#[test]
fn export_omits_zeros_and_reads_exactly() {
    let a = DenseMatrix::from_rows(&[[1.5, 0.0, -0.25], [0.0, 0.0, 0.0], [-0.25, 0.0, 0.0]]);
    let q = Qubo::new(a, vec![0.5, 0.0, 0.125], -2.0).unwrap();
    let mut buf = Vec::new();
    write_qubo(&q, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "N 3 K1 -2\n0 0 2\n0 2 -0.5\n2 2 0.125\n");
    let back = read_qubo(buf.as_slice()).unwrap();
    assert_eq!(back.b(), &[2.0, 0.0, 0.125]);
    assert_eq!(back.a()[(0, 2)], -0.25);
    assert_eq!(back.k1(), -2.0);
}

#[test]
fn malformed_files_are_rejected() {
    for text in ["", "N 2\n", "N 2 K1 0\n0 2 1\n", "N 2 K1 0\n1 0 1\n", "N 2 K1 0\n0 1 1\n0 1 2\n", "N 2 K1 0\n0 1 x\n"]
    {
        assert!(matches!(read_qubo(text.as_bytes()), Err(QuboError::Parse { .. })), "{text:?}");
    }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn conversion_constant_is_exact(seed in any::<u64>(), n in 1usize..9) {
        let q = random_qubo(n, seed);
        let m = qubo_to_ising(&q);
        prop_assert!(m.j().is_symmetric(0.0));
        prop_assert!((0..n).all(|i| m.j()[(i, i)] == 0.0));
        for mask in 0..1u32 << n {
            let x = bits(mask, n);
            let z: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
            prop_assert!((qubo_energy(&q, &x).unwrap() - ising_energy(&m, &z).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn scaling_is_idempotent(seed in any::<u64>(), range in 0.5f64..10.0) {
        let q = random_qubo(6, seed);
        let (s, _) = scale_qubo(&q, range).unwrap();
        prop_assert_eq!(s.max_abs_coefficient(), range);
        let (t, f) = scale_qubo(&s, range).unwrap();
        prop_assert_eq!(f, 1.0);
        prop_assert_eq!(t, s);
    }
}
