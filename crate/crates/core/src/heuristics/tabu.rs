use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    FlipObserver, HeuristicsError, NoObserver, Objective, Result, SolutionPool, SolverBudget, SolverRun, SolverTag,
    TracePoint,
};
use crate::portfolio::Portfolio;
use crate::qubo::Qubo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabuConfig {
    /// Base number of moves a flipped bit stays tabu, `ceil(N / 10)` if
    /// `None`. Each flip adds a random extra of up to the base again.
    pub tenure: Option<usize>,
    /// Random restart after this many moves without a new best.
    pub restart_after: u64,
}

impl Default for TabuConfig {
    fn default() -> Self {
        Self { tenure: None, restart_after: 5000 }
    }
}

/// Single-flip tabu search on a QUBO, starting from the empty selection.
pub fn tabu_search(q: &Qubo, budget: &SolverBudget) -> Result<SolverRun> {
    tabu_search_with(q, &TabuConfig::default(), budget, &mut NoObserver)
}

/// As [`tabu_search`], reporting every accepted flip to `observer`; the trace
/// takes its scores from the observer.
pub fn tabu_search_with(
    q: &Qubo,
    cfg: &TabuConfig,
    budget: &SolverBudget,
    observer: &mut dyn FlipObserver,
) -> Result<SolverRun> {
    budget.validate()?;
    let n = q.n();
    if n == 0 {
        return Err(HeuristicsError::InvalidConfig("empty QUBO".into()));
    }
    let restart_after = cfg.restart_after;
    if restart_after == 0 {
        return Err(HeuristicsError::InvalidConfig("restart_after must be positive".into()));
    }
    let tenure = cfg.tenure.unwrap_or(n.div_ceil(10)).min(n - 1) as u64;
    let a = q.a();
    let b = q.b();
    let clock = budget.clock();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut pool = SolutionPool::new(n, Objective::QuboEnergy);
    let mut trace: Vec<TracePoint> = Vec::new();

    let mut x = Portfolio::empty(n);
    // h = A x
    let mut h = vec![0.0; n];
    let mut energy = q.k1();
    let mut best = energy;
    let mut tabu_until = vec![0u64; n];
    let mut since_best = 0u64;
    let mut evaluations = 0u64;
    observer.reset(&x);
    pool.offer(&x, energy, SolverTag::Tabu, 0);

    while !clock.exhausted(evaluations) {
        let mut chosen: Option<(usize, f64)> = None;
        for i in 0..n {
            let xi = if x.contains(i) { 1.0 } else { 0.0 };
            let aii = a[(i, i)];
            let delta = (1.0 - 2.0 * xi) * (aii + b[i] + 2.0 * (h[i] - aii * xi));
            let allowed = tabu_until[i] <= evaluations || energy + delta < best;
            if allowed && chosen.is_none_or(|(_, d)| delta < d) {
                chosen = Some((i, delta));
            }
        }
        let Some((i, delta)) = chosen else {
            // every move tabu and none aspirates: let the oldest expire
            let (i, _) = tabu_until.iter().enumerate().min_by_key(|(_, t)| **t).unwrap();
            tabu_until[i] = 0;
            continue;
        };
        evaluations += 1;
        let sign = if x.contains(i) { -1.0 } else { 1.0 };
        x.toggle(i);
        for (hj, aj) in h.iter_mut().zip(a.row(i)) {
            *hj += sign * aj;
        }
        energy += delta;
        tabu_until[i] = evaluations + tenure + rng.random_range(0..=tenure);
        observer.flip(i, x.contains(i));
        if budget.record_trace {
            let (cqns, sharpe) = observer.observe();
            trace.push(TracePoint { sequence: evaluations, cqns, sharpe, accepted: true });
        }
        if energy < best {
            // accumulated deltas drift; book the exact energy
            energy = q.energy_of(&x);
            best = energy;
            since_best = 0;
            pool.offer(&x, energy, SolverTag::Tabu, evaluations);
        } else {
            since_best += 1;
        }
        if since_best >= restart_after {
            since_best = 0;
            x = Portfolio::from_bools(&(0..n).map(|_| rng.random_bool(0.5)).collect::<Vec<_>>());
            let xs = x.to_binary();
            a.matvec_into(&xs, &mut h, budget.exec);
            energy = q.energy_of(&x);
            tabu_until.iter_mut().for_each(|t| *t = 0);
            observer.reset(&x);
        }
    }
    Ok(SolverRun { pool, trace, evaluations, elapsed_seconds: clock.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::random_qubo;

    fn brute_force(q: &Qubo) -> f64 {
        (0u64..1 << q.n())
            .map(|m| q.energy_of(&Portfolio::from_indices(q.n(), (0..q.n()).filter(|i| m >> i & 1 == 1))))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn finds_ground_state_of_small_instances() {
        let hits = (0..50)
            .filter(|&seed| {
                let q = random_qubo(10, seed);
                let run = tabu_search(&q, &SolverBudget::evaluations(3000, seed)).unwrap();
                let best = run.pool.best().unwrap();
                assert!((best.score - q.energy_of(&best.selection)).abs() < 1e-12);
                (best.score - brute_force(&q)).abs() < 1e-9
            })
            .count();
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn zero_matrix_with_positive_field_stays_empty() {
        let q = Qubo::new(crate::matrix::DenseMatrix::zeros(6, 6), vec![0.5; 6], 0.0).unwrap();
        let run = tabu_search(&q, &SolverBudget::evaluations(200, 1)).unwrap();
        assert_eq!(run.pool.best().unwrap().selection, Portfolio::empty(6));
    }
}
