use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeuristicsError, Objective, Result, Scorer, SolutionPool, SolverBudget, SolverRun, SolverTag};
use crate::market_data::Universe;
use crate::parallel;
use crate::portfolio::Portfolio;
use crate::scoring::{compare_scores, cqns_from_moments, search_score, CqnsPower};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per held asset, probability of swapping it for a random outsider.
    pub mutation_rate: f64,
    pub elitism_count: usize,
    pub tournament_size: usize,
    /// Initial individuals; repaired to size k. The rest are random.
    pub seeds: Vec<Portfolio>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 64,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: 0.05,
            elitism_count: 2,
            tournament_size: 3,
            seeds: Vec::new(),
        }
    }
}

impl GaConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HeuristicsError::InvalidConfig(m));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if self.elitism_count >= self.population_size {
            return bad(format!("elitism_count {} >= population_size {}", self.elitism_count, self.population_size));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]".into());
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1".into());
        }
        Ok(())
    }
}

/// Randomly drops held assets or adds outsiders until exactly `k` are held.
pub fn repair_to_k(p: &mut Portfolio, k: usize, rng: &mut impl Rng) {
    let have = p.cardinality();
    if have > k {
        let held: Vec<usize> = p.indices().collect();
        for pos in index::sample(rng, held.len(), have - k) {
            p.remove(held[pos]);
        }
    } else if have < k {
        let free: Vec<usize> = p.complement_indices().collect();
        for pos in index::sample(rng, free.len(), k - have) {
            p.insert(free[pos]);
        }
    }
}

#[derive(Clone)]
struct Individual {
    sel: Portfolio,
    score: f64,
}

fn tournament<'p>(pop: &'p [Individual], size: usize, rng: &mut impl Rng) -> &'p Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if compare_scores(c.score, best.score).then_with(|| c.sel.cmp(&best.sel)).is_lt() {
            best = c;
        }
    }
    best
}

fn uniform_crossover(a: &Portfolio, b: &Portfolio, rng: &mut impl Rng) -> Portfolio {
    let mut child = Portfolio::empty(a.len());
    for i in 0..a.len() {
        let (x, y) = (a.contains(i), b.contains(i));
        if x == y {
            if x {
                child.insert(i);
            }
        } else if rng.random_bool(0.5) == x {
            child.insert(i);
        }
    }
    child
}

fn mutate(p: &mut Portfolio, rate: f64, rng: &mut impl Rng) {
    if rate == 0.0 {
        return;
    }
    let held: Vec<usize> = p.indices().collect();
    for i in held {
        if rng.random_bool(rate) {
            let free: Vec<usize> = p.complement_indices().collect();
            if free.is_empty() {
                return;
            }
            p.remove(i);
            p.insert(free[rng.random_range(0..free.len())]);
        }
    }
}

/// Genetic algorithm over k-subsets: tournament selection, uniform crossover
/// with cardinality repair, swap mutation, and elitism.
pub fn genetic(u: &Universe, w: CqnsPower, k: usize, cfg: &GaConfig, budget: &SolverBudget) -> Result<SolverRun> {
    budget.validate()?;
    cfg.validate()?;
    let n = u.n();
    if k == 0 || k > n {
        return Err(HeuristicsError::InvalidK { k, n });
    }
    if let Some(bad) = cfg.seeds.iter().find(|s| s.len() != n) {
        return Err(HeuristicsError::SeedDimensionMismatch { expected: n, got: bad.len() });
    }
    let scorer = Scorer::new(u, w);
    let clock = budget.clock();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut pool = SolutionPool::new(n, Objective::Cqns);
    let mut trace = Vec::new();
    let mut evaluations = 0u64;

    let mut initial: Vec<Portfolio> = Vec::with_capacity(cfg.population_size);
    for seed in &cfg.seeds {
        if initial.len() == cfg.population_size {
            break;
        }
        let mut s = seed.clone();
        repair_to_k(&mut s, k, &mut rng);
        if !initial.contains(&s) {
            initial.push(s);
        }
    }
    while initial.len() < cfg.population_size {
        initial.push(Portfolio::from_indices(n, index::sample(&mut rng, n, k)));
    }

    // Scores a batch in parallel, then books it sequentially; returns the
    // individuals that fit in the evaluation budget.
    let evaluate = |batch: Vec<Portfolio>, evaluations: &mut u64, pool: &mut SolutionPool, trace: &mut Vec<_>| {
        let moments = parallel::map_slice(budget.exec, &batch, |s| scorer.moments(s));
        let mut out = Vec::with_capacity(batch.len());
        for (sel, (v, m)) in batch.into_iter().zip(moments) {
            if !clock.evaluations_left(*evaluations) {
                break;
            }
            *evaluations += 1;
            if budget.record_trace {
                trace.push(scorer.trace_point(*evaluations, v, m, true));
            }
            if let Ok(score) = cqns_from_moments(v, m, w) {
                pool.offer(&sel, score, SolverTag::Ga, *evaluations);
            }
            out.push(Individual { score: search_score(v, m, w), sel });
        }
        out
    };

    let mut population = evaluate(initial, &mut evaluations, &mut pool, &mut trace);
    let rank = |pop: &mut Vec<Individual>| {
        pop.sort_by(|a, b| compare_scores(a.score, b.score).then_with(|| a.sel.cmp(&b.sel)));
    };
    rank(&mut population);

    for _ in 0..cfg.generations {
        if population.is_empty() || clock.exhausted(evaluations) {
            break;
        }
        let mut children = Vec::with_capacity(cfg.population_size);
        while children.len() + cfg.elitism_count.min(population.len()) < cfg.population_size {
            let p1 = tournament(&population, cfg.tournament_size, &mut rng);
            let p2 = tournament(&population, cfg.tournament_size, &mut rng);
            let mut child = if rng.random_bool(cfg.crossover_rate) {
                uniform_crossover(&p1.sel, &p2.sel, &mut rng)
            } else {
                p1.sel.clone()
            };
            repair_to_k(&mut child, k, &mut rng);
            mutate(&mut child, cfg.mutation_rate, &mut rng);
            debug_assert_eq!(child.cardinality(), k);
            children.push(child);
        }
        let mut next: Vec<Individual> = population.iter().take(cfg.elitism_count).cloned().collect();
        next.extend(evaluate(children, &mut evaluations, &mut pool, &mut trace));
        rank(&mut next);
        population = next;
    }

    // Final best of the last population is already in the pool if its exact
    // score is defined; make that explicit for populations seeded only with
    // undefined-score individuals.
    if let Some(best) = population.first() {
        if let Some(score) = scorer.exact(&best.sel) {
            pool.offer(&best.sel, score, SolverTag::Ga, evaluations);
        }
    }
    Ok(SolverRun { pool, trace, evaluations, elapsed_seconds: clock.elapsed() })
}
