use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PipelineConfig;
use crate::heuristics::{Scorer, SolutionPool, SolverTag, TracePoint};
use crate::market_data::{MarketDataError, Universe};
use crate::portfolio::Portfolio;
use crate::scoring::{cqns_final, score_report, CqnsPower, ScoreReport, ScoringError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step1Report {
    pub power: f64,
    /// Set when calibration failed and the cubic power was used instead.
    pub calibration_warning: Option<String>,
    /// The all-asset portfolio under `power`; scores 0 when calibrated.
    pub all_in: ScoreReport,
    pub pool: SolutionPool,
    pub sub_universe_indices: Vec<usize>,
    pub sub_universe_tickers: Vec<String>,
}

/// Best output of a QUBO solver, rescored as a portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboCandidate {
    pub solver: SolverTag,
    pub selection: Portfolio,
    pub cardinality: usize,
    /// Whether the cardinality equals the target size.
    pub valid: bool,
    /// Energy under the scaled QUBO.
    pub qubo_energy: f64,
    /// Energy of the matching spin vector under the Ising model.
    pub ising_energy: Option<f64>,
    pub cqns_final: Option<f64>,
}

impl QuboCandidate {
    pub(super) fn new(
        solver: SolverTag,
        selection: &Portfolio,
        k: usize,
        qubo_energy: f64,
        ising_energy: Option<f64>,
        scorer: &Scorer,
    ) -> Self {
        let cardinality = selection.cardinality();
        Self {
            solver,
            selection: selection.clone(),
            cardinality,
            valid: cardinality == k,
            qubo_energy,
            ising_energy,
            cqns_final: if cardinality == 0 { None } else { scorer.exact(selection) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Report {
    pub k: usize,
    /// The raw QUBO was divided by this factor.
    pub qubo_scale_factor: f64,
    pub qubo_max_abs: f64,
    pub qubo_note: Option<String>,
    pub sbm_iterations: usize,
    pub sbm_xi0: f64,
    pub candidates: Vec<QuboCandidate>,
    pub seeded_ga_best: Option<f64>,
    /// Valid portfolios of size `k`, ascending by score.
    pub pool: SolutionPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalBest {
    pub stage: String,
    pub k: usize,
    pub source: SolverTag,
    /// Over the full universe.
    pub selection: Portfolio,
    pub tickers: Vec<String>,
    pub score: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTiming {
    pub stage: String,
    pub k: Option<usize>,
    pub solver: SolverTag,
    /// Distinguishes runs of the same solver, e.g. `mc_fixed_n`.
    pub run: String,
    pub evaluations: u64,
    pub elapsed_seconds: f64,
}

impl SolverTiming {
    /// `stage/run` or `stage/k=<k>/run`.
    pub fn label(&self) -> String {
        match self.k {
            Some(k) => format!("{}/k={}/{}", self.stage, k, self.run),
            None => format!("{}/{}", self.stage, self.run),
        }
    }
}

/// Score-versus-sequence data of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub stage: String,
    pub k: Option<usize>,
    pub solver: SolverTag,
    pub run: String,
    pub points: Vec<TracePoint>,
}

impl ChartSeries {
    /// File stem such as `step1_mc_fixed_n` or `step2_k5_sa`.
    pub fn file_stem(&self) -> String {
        match self.k {
            Some(k) => format!("{}_k{}_{}", self.stage, k, self.run),
            None => format!("{}_{}", self.stage, self.run),
        }
    }
}

/// Everything a run produced. Wall-clock timings and chart series are not
/// part of the JSON form, so that equal seeds give byte-identical documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub universe_tickers: Vec<String>,
    pub step1: Step1Report,
    pub step2_power: f64,
    pub sub_universe_all_in: ScoreReport,
    pub step2: Vec<Step2Report>,
    pub final_best: FinalBest,
    /// Portfolios evaluated per solver run.
    pub evaluations: BTreeMap<String, u64>,
    #[serde(skip)]
    pub timings: Vec<SolverTiming>,
    #[serde(skip)]
    pub charts: Vec<ChartSeries>,
}

impl PipelineReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Writes `solver,sequence,cqns,sharpe` rows; undefined scores are empty.
pub fn write_chart_csv<'a, W: Write>(series: impl IntoIterator<Item = &'a ChartSeries>, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["solver", "sequence", "cqns", "sharpe"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in series {
        for p in &s.points {
            w.write_record([s.solver.as_str(), &p.sequence.to_string(), &opt(p.cqns), &opt(p.sharpe)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("report was produced for a different universe: {0}")]
    UniverseMismatch(String),
    #[error("{what}: reported {reported:e}, recomputed {recomputed:e}")]
    ScoreMismatch { what: String, reported: f64, recomputed: f64 },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
}

impl VerifyError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UniverseMismatch(_) => "UniverseMismatch",
            Self::ScoreMismatch { .. } => "ScoreMismatch",
            Self::Scoring(e) => e.code(),
            Self::MarketData(e) => e.code(),
        }
    }
}

const VERIFY_TOLERANCE: f64 = 1e-12;

fn check(what: impl Into<String>, reported: f64, recomputed: f64) -> Result<(), VerifyError> {
    if (reported - recomputed).abs() <= VERIFY_TOLERANCE {
        Ok(())
    } else {
        Err(VerifyError::ScoreMismatch { what: what.into(), reported, recomputed })
    }
}

fn check_report(what: &str, r: &ScoreReport, u: &Universe, p: &Portfolio, w: CqnsPower) -> Result<(), VerifyError> {
    let again = score_report(u, p, w, 0.0)?;
    check(format!("{what} cqns_final"), r.cqns_final, again.cqns_final)?;
    check(format!("{what} variance"), r.variance, again.variance)?;
    check(format!("{what} expected_return"), r.expected_return, again.expected_return)
}

/// Recomputes every score in `report` from `u` and checks each within 1e-12.
/// Returns the number of scores checked.
pub fn verify_report(report: &PipelineReport, u: &Universe) -> Result<usize, VerifyError> {
    if report.universe_tickers != u.tickers() {
        return Err(VerifyError::UniverseMismatch(format!(
            "{} tickers in report, {} in universe",
            report.universe_tickers.len(),
            u.n()
        )));
    }
    let mut checked = 0;
    let w1 = CqnsPower::new(report.step1.power)?;
    check_report("all-in", &report.step1.all_in, u, &Portfolio::full(u.n()), w1)?;
    checked += 1;
    for (i, e) in report.step1.pool.entries().iter().enumerate() {
        check(format!("step 1 pool entry {i}"), e.score, cqns_final(u, &e.selection, w1)?)?;
        checked += 1;
    }

    let sub = u.subset(&report.step1.sub_universe_indices)?;
    if sub.tickers() != report.step1.sub_universe_tickers {
        return Err(VerifyError::UniverseMismatch("sub-universe tickers differ".into()));
    }
    let w2 = CqnsPower::new(report.step2_power)?;
    check_report("sub-universe all-in", &report.sub_universe_all_in, &sub, &Portfolio::full(sub.n()), w2)?;
    checked += 1;
    for r in &report.step2 {
        for (i, e) in r.pool.entries().iter().enumerate() {
            check(format!("step 2 k={} pool entry {i}", r.k), e.score, cqns_final(&sub, &e.selection, w2)?)?;
            checked += 1;
        }
        for c in &r.candidates {
            if let Some(s) = c.cqns_final {
                check(format!("step 2 k={} {} candidate", r.k, c.solver), s, cqns_final(&sub, &c.selection, w2)?)?;
                checked += 1;
            }
        }
    }

    let fb = &report.final_best;
    let w = CqnsPower::new(fb.score.power_used)?;
    check_report("final best", &fb.score, u, &fb.selection, w)?;
    let tickers: Vec<String> = fb.selection.indices().map(|i| u.tickers()[i].clone()).collect();
    if tickers != fb.tickers {
        return Err(VerifyError::UniverseMismatch("final best tickers differ from its selection".into()));
    }
    Ok(checked + 1)
}
