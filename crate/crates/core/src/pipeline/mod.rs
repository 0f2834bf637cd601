//! The two-stage funnel: search the full universe for the best portfolio of
//! `step1_target_n` assets, then run the solver team on that sub-universe for
//! each target size and finish with a genetic algorithm seeded from the
//! merged results.

mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristics::{
    self, genetic, monte_carlo, pool_merge, simulated_annealing, tabu_search_with, CoolingSchedule, CqnsFlipObserver,
    GaConfig, HeuristicsError, McMode, Objective, PoolEntry, Scorer, SolutionPool, SolverBudget, SolverRun, SolverTag,
    TabuConfig, TracePoint,
};
use crate::market_data::{MarketDataError, Universe};
use crate::parallel::{self, ExecMode};
use crate::portfolio::Portfolio;
use crate::qubo::{self, build_cqns_qubo, qubo_to_ising, scale_qubo, QuboBuildSpec, QuboError};
use crate::sbm::{run_sbm, SbmError, SbmParams};
use crate::scoring::{calibrate_power_or_cubic, compare_scores, score_report, CqnsPower, ScoringError};

pub use report::{
    verify_report, write_chart_csv, ChartSeries, FinalBest, PipelineReport, QuboCandidate, SolverTiming, Step1Report,
    Step2Report, VerifyError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Sbm(#[from] SbmError),
    #[error(transparent)]
    Heuristics(#[from] HeuristicsError),
    #[error("no solver produced a usable portfolio: {0}")]
    EmptyPool(String),
    #[error("invalid sub-universe: {0}")]
    InvalidSubUniverse(String),
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::MarketData(e) => e.code(),
            Self::Scoring(e) => e.code(),
            Self::Qubo(e) => e.code(),
            Self::Sbm(e) => e.code(),
            Self::Heuristics(e) => e.code(),
            Self::EmptyPool(_) => "EmptyPool",
            Self::InvalidSubUniverse(_) => "InvalidSubUniverse",
            Self::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// Name of the module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Self::MarketData(_) => "market_data",
            Self::Scoring(_) => "scoring",
            Self::Qubo(_) => "qubo",
            Self::Sbm(_) => "sbm",
            Self::Heuristics(_) => "heuristics",
            _ => "pipeline",
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerPolicy {
    /// Step 2 scores with the power calibrated on the full universe.
    #[default]
    CarryForward,
    /// Step 2 recalibrates on the sub-universe.
    Recalibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubUniverseRule {
    /// Assets of the best exactly-n portfolio found in step 1.
    #[default]
    BestPortfolio,
    /// The n assets with the lowest single-asset score.
    TopAssetsBySingletonScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub step1_target_n: usize,
    /// Empty selects [`default_step2_ks`].
    pub step2_target_ks: Vec<usize>,
    /// Template for every solver; each gets its own derived seed.
    pub per_solver_budget: SolverBudget,
    /// `None` selects the default cardinality penalty.
    pub penalty_lambda: Option<f64>,
    pub scale_range: f64,
    pub power_policy: PowerPolicy,
    pub sub_universe_rule: SubUniverseRule,
    /// Run the solvers of a stage concurrently.
    pub concurrent: bool,
    pub cooling: CoolingSchedule,
    /// Seeds are filled in by the pipeline.
    pub ga: GaConfig,
    pub tabu: TabuConfig,
    /// `None` selects [`SbmParams::for_size`] of the sub-universe.
    pub sbm_iterations: Option<usize>,
    pub sbm_epsilon: Option<f64>,
    pub sbm_xi0: Option<f64>,
    pub risk_free: f64,
}

impl PipelineConfig {
    pub fn new(step1_target_n: usize, budget: SolverBudget) -> Self {
        Self {
            step1_target_n,
            step2_target_ks: Vec::new(),
            per_solver_budget: budget,
            penalty_lambda: None,
            scale_range: 4.0,
            power_policy: PowerPolicy::default(),
            sub_universe_rule: SubUniverseRule::default(),
            concurrent: true,
            cooling: CoolingSchedule::default(),
            ga: GaConfig::default(),
            tabu: TabuConfig::default(),
            sbm_iterations: None,
            sbm_epsilon: None,
            sbm_xi0: None,
            risk_free: 0.0,
        }
    }

    /// Target sizes for step 2.
    pub fn step2_ks(&self) -> Vec<usize> {
        if self.step2_target_ks.is_empty() {
            default_step2_ks(self.step1_target_n)
        } else {
            self.step2_target_ks.clone()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.step1_target_n < 2 || self.step1_target_n > n {
            return bad(format!("step1_target_n = {} must lie in 2..={n}", self.step1_target_n));
        }
        for k in self.step2_ks() {
            if k == 0 || k > self.step1_target_n {
                return bad(format!("step 2 size {k} must lie in 1..={}", self.step1_target_n));
            }
        }
        if !(self.scale_range > 0.0 && self.scale_range.is_finite()) {
            return bad(format!("scale_range must be positive, got {}", self.scale_range));
        }
        if let Some(l) = self.penalty_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("penalty_lambda must be non-negative, got {l}"));
            }
        }
        Ok(())
    }

    fn exec(&self) -> ExecMode {
        if self.concurrent {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }

    fn budget_for(&self, stage: u64, k: usize, tag: SolverTag, variant: u64) -> SolverBudget {
        SolverBudget {
            seed: derive_seed(self.per_solver_budget.seed, stage, k as u64, tag as u64 * 16 + variant),
            ..self.per_solver_budget.clone()
        }
    }

    fn sbm_params(&self, n: usize, k: usize) -> SbmParams {
        let mut p = SbmParams::for_size(n);
        if let Some(it) = self.sbm_iterations {
            p.iterations = it;
        }
        if let Some(e) = self.sbm_epsilon {
            p.epsilon = e;
        }
        p.xi0 = self.sbm_xi0;
        p.seed = derive_seed(self.per_solver_budget.seed, 2, k as u64, SolverTag::Sbm as u64 * 16);
        p.exec = self.per_solver_budget.exec;
        p
    }
}

/// Half, third and quarter of `n`, largest first, without duplicates or zeros.
pub fn default_step2_ks(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [2, 3, 4].iter().map(|d| (n + d / 2) / d).filter(|&k| k >= 1).collect();
    ks.dedup();
    ks
}

/// SplitMix64 over the inputs; gives every solver an independent stream.
fn derive_seed(base: u64, stage: u64, k: u64, solver: u64) -> u64 {
    let mut z = base;
    for v in [stage, k, solver] {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(v);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

type Job<'a> = Box<dyn FnOnce() -> heuristics::Result<SolverRun> + Send + 'a>;

fn record(
    stage: &str,
    k: Option<usize>,
    solver: SolverTag,
    name: &str,
    run: &SolverRun,
) -> (SolverTiming, ChartSeries) {
    (
        SolverTiming {
            stage: stage.to_string(),
            k,
            solver,
            run: name.to_string(),
            evaluations: run.evaluations,
            elapsed_seconds: run.elapsed_seconds,
        },
        ChartSeries { stage: stage.to_string(), k, solver, run: name.to_string(), points: run.trace.clone() },
    )
}

/// Output of step 1.
#[derive(Debug, Clone)]
pub struct Step1Outcome {
    pub report: Step1Report,
    pub sub_universe: Universe,
    pub timings: Vec<SolverTiming>,
    pub charts: Vec<ChartSeries>,
}

/// Calibrates the power, runs MC (around N/2 and fixed n), a randomly
/// initialized GA and SA on the full universe, and extracts the sub-universe.
pub fn run_step1(u: &Universe, cfg: &PipelineConfig) -> Result<Step1Outcome> {
    cfg.validate(u.n())?;
    let (w, calibration_warning) = calibrate_power_or_cubic(u);
    let n = cfg.step1_target_n;
    let mut ga = cfg.ga.clone();
    ga.seeds.clear();

    let order = [
        (SolverTag::Mc, "mc_around_half"),
        (SolverTag::Mc, "mc_fixed_n"),
        (SolverTag::Ga, "ga"),
        (SolverTag::Sa, "sa"),
    ];
    let jobs: Vec<Job> = vec![
        Box::new(|| monte_carlo(u, w, McMode::AroundHalf, &cfg.budget_for(1, n, SolverTag::Mc, 0))),
        Box::new(|| monte_carlo(u, w, McMode::FixedK(n), &cfg.budget_for(1, n, SolverTag::Mc, 1))),
        Box::new(|| genetic(u, w, n, &ga, &cfg.budget_for(1, n, SolverTag::Ga, 0))),
        Box::new(|| simulated_annealing(u, w, n, &cfg.cooling, &cfg.budget_for(1, n, SolverTag::Sa, 0))),
    ];
    let runs = parallel::run_jobs(cfg.exec(), jobs).into_iter().collect::<heuristics::Result<Vec<_>>>()?;

    let mut timings = Vec::new();
    let mut charts = Vec::new();
    for ((tag, name), run) in order.iter().zip(&runs) {
        let (t, c) = record("step1", None, *tag, name, run);
        timings.push(t);
        charts.push(c);
    }
    let pools: Vec<SolutionPool> = runs.into_iter().map(|r| r.pool).collect();
    let pool = pool_merge(&pools)?;
    if pool.is_empty() {
        return Err(PipelineError::EmptyPool("step 1 solvers scored no portfolio".into()));
    }

    let indices: Vec<usize> = match cfg.sub_universe_rule {
        SubUniverseRule::BestPortfolio => {
            let best = pool
                .with_cardinality(n)
                .next()
                .ok_or_else(|| PipelineError::EmptyPool(format!("no {n}-asset portfolio in the step 1 pool")))?;
            best.selection.indices().collect()
        }
        SubUniverseRule::TopAssetsBySingletonScore => top_singletons(u, w, n),
    };
    let sub_universe = u.subset(&indices)?;
    let all_in = score_report(u, &Portfolio::full(u.n()), w, cfg.risk_free)?;
    let report = Step1Report {
        power: w.value(),
        calibration_warning: calibration_warning.map(|e| e.to_string()),
        all_in,
        pool,
        sub_universe_indices: indices,
        sub_universe_tickers: sub_universe.tickers().to_vec(),
    };
    Ok(Step1Outcome { report, sub_universe, timings, charts })
}

/// Asset indices with the `n` lowest single-asset scores, ascending by index.
fn top_singletons(u: &Universe, w: CqnsPower, n: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> =
        (0..u.n()).map(|i| (Scorer::new(u, w).search(&Portfolio::from_indices(u.n(), [i])), i)).collect();
    scored.sort_by(|a, b| compare_scores(a.0, b.0).then(a.1.cmp(&b.1)));
    let mut idx: Vec<usize> = scored.into_iter().take(n).map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// Output of step 2.
#[derive(Debug, Clone)]
pub struct Step2Outcome {
    pub power: CqnsPower,
    pub reports: Vec<Step2Report>,
    pub timings: Vec<SolverTiming>,
    pub charts: Vec<ChartSeries>,
}

/// For each target size: compile and scale the QUBO, run SA on the universe,
/// SBM on the Ising model and tabu on the QUBO, then a GA seeded with the
/// merged valid results.
pub fn run_step2(sub: &Universe, cfg: &PipelineConfig, carried_power: Option<CqnsPower>) -> Result<Step2Outcome> {
    let ks = cfg.step2_ks();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > sub.n()) {
        return Err(PipelineError::InvalidSubUniverse(format!(
            "{} assets cannot hold a {bad}-asset portfolio",
            sub.n()
        )));
    }
    let w = match (cfg.power_policy, carried_power) {
        (PowerPolicy::CarryForward, Some(w)) => w,
        _ => calibrate_power_or_cubic(sub).0,
    };
    let mut out = Step2Outcome { power: w, reports: Vec::new(), timings: Vec::new(), charts: Vec::new() };
    for k in ks {
        run_step2_k(sub, cfg, w, k, &mut out)?;
    }
    Ok(out)
}

fn build_for_k(
    sub: &Universe,
    cfg: &PipelineConfig,
    w: CqnsPower,
    k: usize,
) -> Result<(qubo::Qubo, f64, Option<String>)> {
    let spec =
        QuboBuildSpec { target_k: k, power: w, penalty_lambda: cfg.penalty_lambda, scale_range: cfg.scale_range };
    let (raw, note) = match build_cqns_qubo(sub, &spec) {
        Ok(q) => (q, None),
        Err(e @ QuboError::ComplexPowerTerm { .. }) => {
            let note = format!("{e}; QUBO compiled with w = 3");
            log::warn!("{note}");
            (build_cqns_qubo(sub, &QuboBuildSpec { power: CqnsPower::CUBIC, ..spec })?, Some(note))
        }
        Err(e) => return Err(e.into()),
    };
    let (scaled, factor) = scale_qubo(&raw, cfg.scale_range)?;
    Ok((scaled, factor, note))
}

/// Builds the scaled QUBO a step 2 run would use for size `k`.
pub fn step2_qubo(sub: &Universe, cfg: &PipelineConfig, w: CqnsPower, k: usize) -> Result<qubo::Qubo> {
    Ok(build_for_k(sub, cfg, w, k)?.0)
}

fn run_step2_k(sub: &Universe, cfg: &PipelineConfig, w: CqnsPower, k: usize, out: &mut Step2Outcome) -> Result<()> {
    let n = sub.n();
    let (q, scale_factor, qubo_note) = build_for_k(sub, cfg, w, k)?;
    let model = qubo_to_ising(&q);
    let sbm_params = cfg.sbm_params(n, k);
    let scorer = Scorer::new(sub, w);
    let stage = "step2";

    let sa_budget = cfg.budget_for(2, k, SolverTag::Sa, 0);
    let tabu_budget = cfg.budget_for(2, k, SolverTag::Tabu, 0);
    let (sa, (sbm, tabu)) = {
        let sa_job = || simulated_annealing(sub, w, k, &cfg.cooling, &sa_budget);
        let sbm_job = || run_sbm(&model, &sbm_params);
        let tabu_job = || {
            let mut obs = CqnsFlipObserver::new(scorer);
            tabu_search_with(&q, &cfg.tabu, &tabu_budget, &mut obs)
        };
        if cfg.concurrent {
            join3(sa_job, sbm_job, tabu_job)
        } else {
            (sa_job(), (sbm_job(), tabu_job()))
        }
    };
    let (sa, sbm, tabu) = (sa?, sbm?, tabu?);

    let mut candidates = Vec::new();
    // SBM: one readout scored as a portfolio.
    let sbm_sel = Portfolio::from_spins(&sbm.best_spins);
    let x = sbm_sel.to_binary();
    candidates.push(QuboCandidate::new(
        SolverTag::Sbm,
        &sbm_sel,
        k,
        qubo::qubo_energy(&q, &x)?,
        Some(sbm.best_energy),
        &scorer,
    ));
    let sbm_run = SolverRun {
        pool: SolutionPool::new(n, Objective::Cqns),
        trace: if cfg.per_solver_budget.record_trace {
            let point = if sbm_sel.cardinality() > 0 {
                let (v, m) = scorer.moments(&sbm_sel);
                scorer.trace_point(1, v, m, true)
            } else {
                TracePoint { sequence: 1, cqns: None, sharpe: None, accepted: true }
            };
            vec![point]
        } else {
            Vec::new()
        },
        evaluations: 1,
        elapsed_seconds: 0.0,
    };
    if let Some(best) = tabu.pool.best() {
        let z = best.selection.to_spins();
        candidates.push(QuboCandidate::new(
            SolverTag::Tabu,
            &best.selection,
            k,
            best.score,
            Some(qubo::ising_energy(&model, &z)?),
            &scorer,
        ));
    }

    for (tag, name, run) in
        [(SolverTag::Sa, "sa", &sa), (SolverTag::Sbm, "sbm", &sbm_run), (SolverTag::Tabu, "tabu", &tabu)]
    {
        let (t, c) = record(stage, Some(k), tag, name, run);
        out.timings.push(t);
        out.charts.push(c);
    }

    let mut valid = SolutionPool::new(n, Objective::Cqns);
    for c in candidates.iter().filter(|c| c.valid) {
        if let Some(score) = c.cqns_final {
            valid.insert(PoolEntry { selection: c.selection.clone(), score, source: c.solver, timestamp: 0 });
        }
    }
    let merged = pool_merge(&[sa.pool, valid])?;

    let mut ga_cfg = cfg.ga.clone();
    ga_cfg.seeds = merged.entries().iter().map(|e| e.selection.clone()).collect();
    let ga = genetic(sub, w, k, &ga_cfg, &cfg.budget_for(2, k, SolverTag::Ga, 0))?;
    let (t, c) = record(stage, Some(k), SolverTag::Ga, "ga_seeded", &ga);
    out.timings.push(t);
    out.charts.push(c);
    let seeded_ga_best = ga.pool.best_score();
    let pool = pool_merge(&[merged, ga.pool])?;
    if pool.is_empty() {
        return Err(PipelineError::EmptyPool(format!("no {k}-asset portfolio with a defined score")));
    }
    out.reports.push(Step2Report {
        k,
        qubo_scale_factor: scale_factor,
        qubo_max_abs: q.max_abs_coefficient(),
        qubo_note,
        sbm_iterations: sbm.iterations_run,
        sbm_xi0: sbm.xi0_used,
        candidates,
        seeded_ga_best,
        pool,
    });
    Ok(())
}

#[cfg(feature = "parallel")]
fn join3<A, B, C, RA, RB, RC>(a: A, b: B, c: C) -> (RA, (RB, RC))
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    C: FnOnce() -> RC + Send,
    RA: Send,
    RB: Send,
    RC: Send,
{
    rayon::join(a, || rayon::join(b, c))
}

#[cfg(not(feature = "parallel"))]
fn join3<A, B, C, RA, RB, RC>(a: A, b: B, c: C) -> (RA, (RB, RC))
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
    C: FnOnce() -> RC,
{
    (a(), (b(), c()))
}

/// Step 1 followed by step 2 on the extracted sub-universe.
pub fn run_full(u: &Universe, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let s1 = run_step1(u, cfg)?;
    let w1 = CqnsPower::new(s1.report.power)?;
    let s2 = run_step2(&s1.sub_universe, cfg, Some(w1))?;
    let sub_all_in = score_report(&s1.sub_universe, &Portfolio::full(s1.sub_universe.n()), s2.power, cfg.risk_free)?;

    let to_full =
        |sel: &Portfolio| Portfolio::from_indices(u.n(), sel.indices().map(|i| s1.report.sub_universe_indices[i]));
    let mut best: Option<(f64, FinalBest)> = None;
    let mut consider = |stage: &str,
                        k: usize,
                        e: &PoolEntry,
                        full_sel: Portfolio,
                        universe: &Universe,
                        sel: &Portfolio,
                        w|
     -> Result<()> {
        if best.as_ref().is_none_or(|(s, _)| compare_scores(e.score, *s).is_lt()) {
            let score = score_report(universe, sel, w, cfg.risk_free)?;
            let tickers = full_sel.indices().map(|i| u.tickers()[i].clone()).collect();
            best = Some((
                e.score,
                FinalBest { stage: stage.to_string(), k, source: e.source, selection: full_sel, tickers, score },
            ));
        }
        Ok(())
    };
    for r in &s2.reports {
        if let Some(e) = r.pool.best() {
            consider("step2", r.k, e, to_full(&e.selection), &s1.sub_universe, &e.selection, s2.power)?;
        }
    }
    // Step 1 scores are only comparable when step 2 reuses its power.
    if s2.power == w1 {
        if let Some(e) = s1.report.pool.best() {
            consider("step1", e.k(), e, e.selection.clone(), u, &e.selection, w1)?;
        }
    }
    let final_best = best.map(|(_, b)| b).ok_or_else(|| PipelineError::EmptyPool("no final candidate".into()))?;

    let mut timings = s1.timings;
    timings.extend(s2.timings);
    let mut charts = s1.charts;
    charts.extend(s2.charts);
    Ok(PipelineReport {
        config: cfg.clone(),
        universe_tickers: u.tickers().to_vec(),
        step1: s1.report,
        step2_power: s2.power.value(),
        sub_universe_all_in: sub_all_in,
        step2: s2.reports,
        final_best,
        evaluations: timings.iter().map(|t| (t.label(), t.evaluations)).collect(),
        timings,
        charts,
    })
}
