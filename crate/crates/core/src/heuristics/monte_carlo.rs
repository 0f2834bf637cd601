use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, Result, Scorer, SolutionPool, SolverBudget, SolverRun, SolverTag};
use crate::market_data::Universe;
use crate::parallel;
use crate::portfolio::Portfolio;
use crate::scoring::{cqns_from_moments, CqnsPower};

const BATCH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    /// Every asset held independently with probability 1/2.
    AroundHalf,
    /// Uniform random subsets of exactly `k` assets.
    FixedK(usize),
}

impl McMode {
    pub fn sample(self, n: usize, rng: &mut impl Rng) -> Portfolio {
        match self {
            McMode::AroundHalf => {
                let mut p = Portfolio::empty(n);
                let mut word = 0u64;
                for i in 0..n {
                    if i % 64 == 0 {
                        word = rng.random();
                    }
                    if word >> (i % 64) & 1 == 1 {
                        p.insert(i);
                    }
                }
                p
            }
            McMode::FixedK(k) => Portfolio::from_indices(n, index::sample(rng, n, k)),
        }
    }
}

/// Draw `i` uses its own ChaCha stream, so batches can be scored in parallel
/// and still reproduce the sequential sample order exactly.
fn sample_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Random sampling; the pool keeps every sample that improved on the best so far.
pub fn monte_carlo(u: &Universe, w: CqnsPower, mode: McMode, budget: &SolverBudget) -> Result<SolverRun> {
    budget.validate()?;
    let n = u.n();
    if let McMode::FixedK(k) = mode {
        if k == 0 || k > n {
            return Err(super::HeuristicsError::InvalidK { k, n });
        }
    }
    let scorer = Scorer::new(u, w);
    let clock = budget.clock();
    let mut pool = SolutionPool::new(n, Objective::Cqns);
    let mut trace = Vec::new();
    let mut evaluations = 0u64;
    let mut next_draw = 0u64;

    'outer: while !clock.exhausted(evaluations) {
        let first = next_draw;
        next_draw += BATCH as u64;
        let scored = parallel::map_range(budget.exec, BATCH, |j| {
            let sel = mode.sample(n, &mut sample_rng(budget.seed, first + j as u64));
            if sel.cardinality() == 0 {
                None
            } else {
                let (v, m) = scorer.moments(&sel);
                Some((sel, v, m))
            }
        });
        for (sel, v, m) in scored.into_iter().flatten() {
            if !clock.evaluations_left(evaluations) {
                break 'outer;
            }
            evaluations += 1;
            if budget.record_trace {
                trace.push(scorer.trace_point(evaluations, v, m, true));
            }
            if let Ok(score) = cqns_from_moments(v, m, w) {
                pool.offer(&sel, score, SolverTag::Mc, evaluations);
            }
        }
    }
    if evaluations == 0 {
        log::warn!("monte carlo budget expired before any sample was scored");
    }
    Ok(SolverRun { pool, trace, evaluations, elapsed_seconds: clock.elapsed() })
}
