use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeuristicsError, Objective, Result, Scorer, SolutionPool, SolverBudget, SolverRun, SolverTag};
use crate::market_data::Universe;
use crate::portfolio::Portfolio;
use crate::scoring::{search_score, CqnsPower};

/// Geometric cooling `T_j = T_0 r^j`, one swap proposal per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingSchedule {
    /// `None` sets `T_0` to the standard deviation of the score over
    /// `calibration_samples` random k-subsets.
    pub initial_temperature: Option<f64>,
    pub ratio: f64,
    pub calibration_samples: usize,
}

impl Default for CoolingSchedule {
    fn default() -> Self {
        Self { initial_temperature: None, ratio: 0.995, calibration_samples: 200 }
    }
}

/// Incremental state for a k-subset: per-asset covariance row sums over the
/// selection let a swap be scored in O(1) and applied in O(N).
struct SwapState<'a> {
    scorer: Scorer<'a>,
    members: Vec<usize>,
    outsiders: Vec<usize>,
    row_sums: Vec<f64>,
    cov_sum: f64,
    mu_sum: f64,
    k: f64,
}

impl<'a> SwapState<'a> {
    fn new(scorer: Scorer<'a>, sel: &Portfolio) -> Self {
        let mut s = Self {
            scorer,
            members: sel.indices().collect(),
            outsiders: sel.complement_indices().collect(),
            row_sums: Vec::new(),
            cov_sum: 0.0,
            mu_sum: 0.0,
            k: sel.cardinality() as f64,
        };
        s.recompute();
        s
    }

    fn recompute(&mut self) {
        let u = self.scorer.universe;
        let cov = u.cov();
        self.row_sums = (0..u.n())
            .map(|i| {
                let row = cov.row(i);
                self.members.iter().map(|&j| row[j]).sum()
            })
            .collect();
        self.cov_sum = self.members.iter().map(|&i| self.row_sums[i]).sum();
        self.mu_sum = self.members.iter().map(|&i| u.mu()[i]).sum();
    }

    fn moments(&self) -> (f64, f64) {
        (self.cov_sum / (self.k * self.k), self.mu_sum / self.k)
    }

    /// Moments after swapping `members[a]` out and `outsiders[b]` in.
    fn swapped_moments(&self, a: usize, b: usize) -> (f64, f64, f64) {
        let (out, inn) = (self.members[a], self.outsiders[b]);
        let cov = self.scorer.universe.cov();
        let mu = self.scorer.universe.mu();
        let cov_sum = self.cov_sum - 2.0 * self.row_sums[out]
            + cov[(out, out)]
            + 2.0 * (self.row_sums[inn] - cov[(inn, out)])
            + cov[(inn, inn)];
        let mu_sum = self.mu_sum - mu[out] + mu[inn];
        (cov_sum, cov_sum / (self.k * self.k), mu_sum / self.k)
    }

    fn apply(&mut self, a: usize, b: usize, cov_sum: f64) {
        let (out, inn) = (self.members[a], self.outsiders[b]);
        let u = self.scorer.universe;
        let (row_out, row_in) = (u.cov().row(out), u.cov().row(inn));
        for (i, r) in self.row_sums.iter_mut().enumerate() {
            *r += row_in[i] - row_out[i];
        }
        self.cov_sum = cov_sum;
        self.mu_sum += u.mu()[inn] - u.mu()[out];
        self.members[a] = inn;
        self.outsiders[b] = out;
    }

    fn selection(&self) -> Portfolio {
        Portfolio::from_indices(self.scorer.universe.n(), self.members.iter().copied())
    }
}

fn random_k_subset(n: usize, k: usize, rng: &mut impl Rng) -> Portfolio {
    Portfolio::from_indices(n, index::sample(rng, n, k))
}

/// Standard deviation of the search score over random k-subsets.
fn calibrate_temperature(scorer: &Scorer, k: usize, samples: usize, rng: &mut impl Rng) -> f64 {
    let n = scorer.universe.n();
    let scores: Vec<f64> = (0..samples.max(2)).map(|_| scorer.search(&random_k_subset(n, k, rng))).collect();
    let m = scores.iter().sum::<f64>() / scores.len() as f64;
    (scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (scores.len() - 1) as f64).sqrt()
}

/// Simulated annealing over k-subsets with swap moves.
pub fn simulated_annealing(
    u: &Universe,
    w: CqnsPower,
    k: usize,
    schedule: &CoolingSchedule,
    budget: &SolverBudget,
) -> Result<SolverRun> {
    budget.validate()?;
    let n = u.n();
    if k == 0 || k > n {
        return Err(HeuristicsError::InvalidK { k, n });
    }
    if !(schedule.ratio > 0.0 && schedule.ratio <= 1.0) {
        return Err(HeuristicsError::InvalidConfig(format!("cooling ratio {} outside (0, 1]", schedule.ratio)));
    }
    let scorer = Scorer::new(u, w);
    let clock = budget.clock();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut temperature = match schedule.initial_temperature {
        Some(t) if t >= 0.0 => t,
        Some(t) => return Err(HeuristicsError::InvalidConfig(format!("negative initial temperature {t}"))),
        None => calibrate_temperature(&scorer, k, schedule.calibration_samples, &mut rng),
    };

    let mut pool = SolutionPool::new(n, Objective::Cqns);
    let mut trace = Vec::new();
    let mut state = SwapState::new(scorer, &random_k_subset(n, k, &mut rng));
    let (v, m) = state.moments();
    let mut current = search_score(v, m, w);
    let mut best = current;
    let mut evaluations = 1u64;
    if budget.record_trace {
        trace.push(scorer.trace_point(evaluations, v, m, true));
    }
    let offer = |pool: &mut SolutionPool, state: &SwapState, ts: u64| {
        let sel = state.selection();
        if let Some(score) = scorer.exact(&sel) {
            pool.offer(&sel, score, SolverTag::Sa, ts);
        }
    };
    offer(&mut pool, &state, evaluations);

    let mut accepted_moves = 0u64;
    while k < n && !clock.exhausted(evaluations) {
        let a = rng.random_range(0..k);
        let b = rng.random_range(0..n - k);
        let (cov_sum, v, m) = state.swapped_moments(a, b);
        let candidate = search_score(v, m, w);
        let delta = candidate - current;
        let accept = delta < 0.0 || (temperature > 0.0 && rng.random::<f64>() < (-delta / temperature).exp());
        evaluations += 1;
        if budget.record_trace {
            trace.push(scorer.trace_point(evaluations, v, m, accept));
        }
        if accept {
            state.apply(a, b, cov_sum);
            current = candidate;
            accepted_moves += 1;
            if accepted_moves.is_multiple_of(1024) {
                state.recompute();
                let (v, m) = state.moments();
                current = search_score(v, m, w);
            }
            if current < best {
                best = current;
                offer(&mut pool, &state, evaluations);
            }
        }
        temperature *= schedule.ratio;
    }
    Ok(SolverRun { pool, trace, evaluations, elapsed_seconds: clock.elapsed() })
}
