use cqns_core::heuristics::{
    genetic, monte_carlo, pool_merge, simulated_annealing, tabu_search, CoolingSchedule, GaConfig, McMode, Objective,
    PoolEntry, SharedPool, SolutionPool, SolverBudget, SolverRun, SolverTag,
};
use cqns_core::scoring::{calibrate_power, cqns_final};
use cqns_core::synthetic::{random_qubo, synthetic_universe};
use cqns_core::{CqnsPower, ExecMode, Portfolio, Universe};
use proptest::prelude::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

/// Best CQNS over every k-subset, by direct enumeration.
fn exhaustive_best(u: &Universe, w: CqnsPower, k: usize) -> f64 {
    let n = u.n();
    let mut best = f64::INFINITY;
    let mut count = 0;
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize != k {
            continue;
        }
        count += 1;
        let p = Portfolio::from_indices(n, (0..n).filter(|i| mask >> i & 1 == 1));
        if let Ok(s) = cqns_final(u, &p, w) {
            best = best.min(s);
        }
    }
    assert_eq!(count, if n == 12 && k == 4 { 495 } else { count });
    best
}

fn hit(run: &SolverRun, best: f64) -> bool {
    run.pool.best_score().is_some_and(|s| s <= best + 1e-12 * best.abs())
}

fn oracle_case(seed: u64) -> (Universe, CqnsPower, f64) {
    let u = synthetic_universe(12, 120, 40_000 + seed);
    let w = calibrate_power(&u).unwrap();
    let best = exhaustive_best(&u, w, 4);
    (u, w, best)
}

#[test]
fn solvers_find_exhaustive_optimum() {
    let (mut sa, mut ga, mut mc) = (0, 0, 0);
    for seed in 0..50u64 {
        let (u, w, best) = oracle_case(seed);
        let sa_run =
            simulated_annealing(&u, w, 4, &CoolingSchedule::default(), &SolverBudget::evaluations(5_000, seed))
                .unwrap();
        sa += hit(&sa_run, best) as usize;
        let mc_run = monte_carlo(&u, w, McMode::FixedK(4), &SolverBudget::evaluations(10_000, seed)).unwrap();
        mc += hit(&mc_run, best) as usize;
        // Seeded from the merged pools of the other solvers.
        let merged = pool_merge(&[sa_run.pool.clone(), mc_run.pool.clone()]).unwrap();
        let seeds: Vec<Portfolio> = merged.entries().iter().map(|e| e.selection.clone()).collect();
        let ga_cfg = GaConfig { seeds, ..GaConfig::default() };
        let ga_run = genetic(&u, w, 4, &ga_cfg, &SolverBudget::evaluations(12_800, seed)).unwrap();
        ga += hit(&ga_run, best) as usize;
    }
    println!("exact matches out of 50: sa {sa}, seeded ga {ga}, mc {mc}");
    assert!(sa >= 45 && ga >= 48 && mc >= 45, "sa {sa} ga {ga} mc {mc}");
}

#[test]
fn unseeded_ga_also_reaches_optimum_mostly() {
    let mut hits = 0;
    for seed in 0..20u64 {
        let (u, w, best) = oracle_case(seed);
        hits += hit(&genetic(&u, w, 4, &GaConfig::default(), &SolverBudget::evaluations(12_800, seed)).unwrap(), best)
            as usize;
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn cardinality_invariants() {
    let u = synthetic_universe(20, 60, 3);
    let w = calibrate_power(&u).unwrap();
    let b = SolverBudget::evaluations(2_000, 1);
    let runs = [
        monte_carlo(&u, w, McMode::FixedK(6), &b).unwrap(),
        simulated_annealing(&u, w, 6, &CoolingSchedule::default(), &b).unwrap(),
        genetic(&u, w, 6, &GaConfig { generations: 20, ..GaConfig::default() }, &b).unwrap(),
    ];
    for r in &runs {
        assert!(!r.pool.is_empty());
        assert!(r.pool.entries().iter().all(|e| e.k() == 6));
        assert!(r.evaluations <= 2_000);
    }
    let half = monte_carlo(&u, w, McMode::AroundHalf, &b).unwrap();
    assert!(half.pool.entries().iter().all(|e| e.k() >= 1));
    for k in [0, 21] {
        assert!(monte_carlo(&u, w, McMode::FixedK(k), &b).is_err());
        assert!(simulated_annealing(&u, w, k, &CoolingSchedule::default(), &b).is_err());
        assert!(genetic(&u, w, k, &GaConfig::default(), &b).is_err());
    }
}

#[test]
fn pool_scores_are_exact_cqns() {
    let u = synthetic_universe(15, 60, 8);
    let w = calibrate_power(&u).unwrap();
    let b = SolverBudget::evaluations(3_000, 2);
    for r in [
        monte_carlo(&u, w, McMode::AroundHalf, &b).unwrap(),
        simulated_annealing(&u, w, 5, &CoolingSchedule::default(), &b).unwrap(),
        genetic(&u, w, 5, &GaConfig { generations: 30, ..GaConfig::default() }, &b).unwrap(),
    ] {
        for e in r.pool.entries() {
            assert_eq!(e.score, cqns_final(&u, &e.selection, w).unwrap());
        }
    }
}

#[test]
fn solvers_are_deterministic_and_mode_independent() {
    let u = synthetic_universe(25, 60, 4);
    let w = calibrate_power(&u).unwrap();
    let run = |exec: ExecMode| {
        let b = SolverBudget { exec, ..SolverBudget::evaluations(3_000, 17) }.with_trace();
        (
            monte_carlo(&u, w, McMode::AroundHalf, &b).unwrap(),
            simulated_annealing(&u, w, 7, &CoolingSchedule::default(), &b).unwrap(),
            genetic(&u, w, 7, &GaConfig { generations: 30, ..GaConfig::default() }, &b).unwrap(),
            tabu_search(&random_qubo(25, 5), &b).unwrap(),
        )
    };
    let (a, b) = (run(ExecMode::Sequential), run(ExecMode::Parallel));
    assert_eq!(a.0.pool, b.0.pool);
    assert_eq!(a.0.trace, b.0.trace);
    assert_eq!(a.1.pool, b.1.pool);
    assert_eq!(a.1.trace, b.1.trace);
    assert_eq!(a.2.pool, b.2.pool);
    assert_eq!(a.2.trace, b.2.trace);
    assert_eq!(a.3.pool, b.3.pool);
    let c = run(ExecMode::Parallel);
    assert_eq!(c.2.pool, b.2.pool);
    assert_eq!(c.3.evaluations, b.3.evaluations);
}

#[test]
fn traces_count_every_evaluation() {
    let u = synthetic_universe(12, 60, 6);
    let w = calibrate_power(&u).unwrap();
    let b = SolverBudget::evaluations(1_500, 3).with_trace();
    for r in [
        monte_carlo(&u, w, McMode::FixedK(3), &b).unwrap(),
        simulated_annealing(&u, w, 3, &CoolingSchedule::default(), &b).unwrap(),
        genetic(&u, w, 3, &GaConfig::default(), &b).unwrap(),
    ] {
        assert_eq!(r.trace.len() as u64, r.evaluations);
        assert!(r.trace.windows(2).all(|p| p[1].sequence == p[0].sequence + 1));
    }
}

#[test]
fn anytime_best_is_monotone() {
    let u = synthetic_universe(30, 60, 12);
    let w = calibrate_power(&u).unwrap();
    let b = SolverBudget::evaluations(4_000, 9);
    for r in [
        monte_carlo(&u, w, McMode::AroundHalf, &b).unwrap(),
        simulated_annealing(&u, w, 8, &CoolingSchedule::default(), &b).unwrap(),
    ] {
        // Entries were only offered on strict improvement: later ones are better.
        let mut by_time: Vec<&PoolEntry> = r.pool.entries().iter().collect();
        by_time.sort_by_key(|e| e.timestamp);
        assert!(by_time.windows(2).all(|p| p[1].score < p[0].score));
    }
    // A larger budget never ends worse than a prefix of the same run.
    let short = simulated_annealing(&u, w, 8, &CoolingSchedule::default(), &SolverBudget::evaluations(500, 9)).unwrap();
    let long =
        simulated_annealing(&u, w, 8, &CoolingSchedule::default(), &SolverBudget::evaluations(4_000, 9)).unwrap();
    assert!(long.pool.best_score().unwrap() <= short.pool.best_score().unwrap());
}

#[test]
fn jsonl_round_trip() {
    let u = synthetic_universe(70, 40, 1);
    let w = calibrate_power(&u).unwrap();
    let r = monte_carlo(&u, w, McMode::AroundHalf, &SolverBudget::evaluations(500, 1)).unwrap();
    let mut buf = Vec::new();
    r.pool.write_jsonl(&mut buf).unwrap();
    let back = SolutionPool::read_jsonl(buf.as_slice(), 70, Objective::Cqns).unwrap();
    assert_eq!(back.len(), r.pool.len());
    for (a, b) in back.entries().iter().zip(r.pool.entries()) {
        assert_eq!((&a.selection, a.score, a.source), (&b.selection, b.score, b.source));
    }
    let first = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["source"], "mc");
    assert!(SolutionPool::read_jsonl(
        "{\"selection\":\"zz\",\"score\":1,\"source\":\"mc\",\"k\":1}".as_bytes(),
        8,
        Objective::Cqns
    )
    .is_err());
}

#[test]
fn merge_rejects_mismatched_pools() {
    let a = SolutionPool::new(4, Objective::Cqns);
    assert!(pool_merge(&[a.clone(), SolutionPool::new(5, Objective::Cqns)]).is_err());
    assert!(pool_merge(&[a, SolutionPool::new(4, Objective::QuboEnergy)]).is_err());
    assert!(pool_merge(&[]).is_err());
}

/// Score is a function of the selection, as it is for any single objective.
fn mask_score(mask: u8) -> i8 {
    (mask.wrapping_mul(37) % 40) as i8 - 20
}

fn entry(mask: u8, score: i8, tag: u8, ts: u64) -> PoolEntry {
    let tags = [SolverTag::Mc, SolverTag::Sa, SolverTag::Ga, SolverTag::Tabu, SolverTag::Sbm];
    PoolEntry {
        selection: Portfolio::from_indices(8, (0..8).filter(|i| mask >> i & 1 == 1)),
        score: score as f64 / 8.0,
        source: tags[tag as usize % 5],
        timestamp: ts,
    }
}

fn entries() -> impl Strategy<Value = Vec<PoolEntry>> {
    prop::collection::vec((1u8..=255, 0u8..5, 0u64..50), 0..20)
        .prop_map(|v| v.into_iter().map(|(m, t, ts)| entry(m, mask_score(m), t, ts)).collect())
}

fn pool_of(es: &[PoolEntry]) -> SolutionPool {
    let mut p = SolutionPool::new(8, Objective::Cqns);
    for e in es {
        p.insert(e.clone());
    }
    p
}

proptest! {
    #![proptest_config(cfg(128))]

    #[test]
    fn merge_is_order_independent(a in entries(), b in entries(), c in entries()) {
        let (pa, pb, pc) = (pool_of(&a), pool_of(&b), pool_of(&c));
        let abc = pool_merge(&[pa.clone(), pb.clone(), pc.clone()]).unwrap();
        let cba = pool_merge(&[pc.clone(), pb.clone(), pa.clone()]).unwrap();
        let nested = pool_merge(&[pool_merge(&[pb.clone(), pc.clone()]).unwrap(), pa.clone()]).unwrap();
        prop_assert_eq!(&abc, &cba);
        prop_assert_eq!(&abc, &nested);

        // Concurrent-style accumulation agrees with the plain merge.
        let shared = SharedPool::new(8, Objective::Cqns);
        for p in [&pc, &pa, &pb] {
            shared.merge_in(p).unwrap();
        }
        prop_assert_eq!(&shared.into_inner(), &abc);
    }

    #[test]
    fn merge_is_union_with_min_best(a in entries(), b in entries()) {
        let (pa, pb) = (pool_of(&a), pool_of(&b));
        let m = pool_merge(&[pa.clone(), pb.clone()]).unwrap();
        let want = [pa.best_score(), pb.best_score()].into_iter().flatten().reduce(f64::min);
        prop_assert_eq!(m.best_score(), want);
        for e in a.iter().chain(&b) {
            prop_assert!(m.contains(&e.selection));
        }
        // Sorted ascending, no duplicate selections.
        prop_assert!(m.entries().windows(2).all(|w| w[0].score <= w[1].score));
        let mut sels: Vec<_> = m.entries().iter().map(|e| e.selection.clone()).collect();
        sels.sort();
        sels.dedup();
        prop_assert_eq!(sels.len(), m.len());
    }

    #[test]
    fn duplicate_keeps_first_seen(mask in 1u8..=255, t1 in 0u64..100, t2 in 0u64..100, tag1 in 0u8..5, tag2 in 0u8..5) {
        let (x, y) = (entry(mask, 1, tag1, t1), entry(mask, 1, tag2, t2));
        let merged = pool_merge(&[pool_of(std::slice::from_ref(&x)), pool_of(std::slice::from_ref(&y))]).unwrap();
        prop_assert_eq!(merged.len(), 1);
        let first = if (t1, x.source) <= (t2, y.source) { &x } else { &y };
        prop_assert_eq!(&merged.entries()[0], first);
    }

    #[test]
    fn offer_only_accepts_improvements(scores in prop::collection::vec(-50i8..50, 1..40)) {
        let mut p = SolutionPool::new(8, Objective::Cqns);
        let mut best = f64::INFINITY;
        for (i, s) in scores.iter().enumerate() {
            let e = entry((i % 255 + 1) as u8, *s, 0, i as u64);
            let took = p.offer(&e.selection, e.score, e.source, e.timestamp);
            prop_assert_eq!(took, e.score < best);
            best = best.min(e.score);
            prop_assert_eq!(p.best_score(), Some(best));
        }
    }
}
