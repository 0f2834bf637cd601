//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the file. Command-line overrides
//! replace file values before anything is validated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cqns_core::heuristics::SolverBudget;
use cqns_core::market_data::{
    load_prices, validate_universe, BetaRange, PriceFormat, PriceSeries, Universe, ValidationReport,
};
use cqns_core::parallel::ExecMode;
use cqns_core::pipeline::{PipelineConfig, PowerPolicy, SubUniverseRule};

use crate::error::{CliError, Result};

const PATH_KEYS: [&str; 2] = ["prices", "index"];

const KNOWN_KEYS: &[&str] = &[
    "prices",
    "index",
    "format",
    "days",
    "beta_min",
    "beta_max",
    "step1_target_n",
    "step2_target_ks",
    "seed",
    "max_evaluations",
    "max_seconds",
    "record_trace",
    "exec",
    "concurrent",
    "penalty_lambda",
    "scale_range",
    "power_policy",
    "sub_universe_rule",
    "sa_initial_temperature",
    "sa_ratio",
    "sa_calibration_samples",
    "ga_population",
    "ga_generations",
    "ga_crossover_rate",
    "ga_mutation_rate",
    "ga_elitism",
    "ga_tournament",
    "tabu_tenure",
    "tabu_restart_after",
    "sbm_iterations",
    "sbm_epsilon",
    "sbm_xi0",
    "risk_free",
];

/// Parses the text of a config file into ordered key-value pairs.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(format!("line {}: expected key = value, got {line:?}", no + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KNOWN_KEYS.contains(&k) {
            return Err(CliError::config(format!("line {}: unknown key {k:?}", no + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::config(format!("line {}: duplicate key {k:?}", no + 1)));
        }
    }
    Ok(out)
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub prices: PathBuf,
    pub index: PathBuf,
    pub format: PriceFormat,
    pub days: usize,
    pub beta_range: BetaRange,
    pub pipeline: PipelineConfig,
    /// Effective key-value pairs, paths absolute; enough to rebuild the run.
    pub entries: BTreeMap<String, String>,
}

struct Entries<'a>(&'a BTreeMap<String, String>);

impl Entries<'_> {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0.get(key).map(|v| v.parse::<T>().map_err(|e| CliError::config(format!("{key} = {v:?}: {e}")))).transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| CliError::config(format!("missing required key {key:?}")))
    }

    fn choice<T>(&self, key: &str, options: &[(&str, T)]) -> Result<Option<T>>
    where
        T: Copy,
    {
        let Some(v) = self.0.get(key) else { return Ok(None) };
        options.iter().find(|(name, _)| *name == v).map(|(_, t)| Some(*t)).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            CliError::config(format!("{key} = {v:?}: expected one of {}", names.join(", ")))
        })
    }
}

impl RunConfig {
    /// Reads `path` and applies `overrides` on top of its entries.
    pub fn load(path: &Path, overrides: &[(&str, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut entries = parse_entries(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for key in PATH_KEYS {
            if let Some(v) = entries.get_mut(key) {
                let p = base.join(&*v);
                *v = std::path::absolute(&p).unwrap_or(p).display().to_string();
            }
        }
        for (k, v) in overrides {
            entries.insert(k.to_string(), v.clone());
        }
        Self::from_entries(entries)
    }

    /// Builds a config from already-resolved entries (as stored in a manifest).
    pub fn from_entries(entries: BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = entries.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::config(format!("unknown key {k:?}")));
        }
        let e = Entries(&entries);
        let prices: PathBuf = e.require("prices")?;
        let index: PathBuf = e.require("index")?;
        let format = match e.0.get("format") {
            Some(f) => f.parse().map_err(CliError::config)?,
            None => PriceFormat::WideCsv,
        };
        let days: usize = e.require("days")?;
        let beta_range = BetaRange::new(e.get("beta_min")?.unwrap_or(0.0), e.get("beta_max")?.unwrap_or(f64::INFINITY))
            .map_err(|err| CliError::config(err.to_string()))?;

        let exec = e.choice("exec", &[("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)])?;
        let budget = SolverBudget {
            max_seconds: e.get("max_seconds")?.unwrap_or(300.0),
            max_evaluations: e.get("max_evaluations")?,
            seed: e.get("seed")?.unwrap_or(0),
            record_trace: e.get("record_trace")?.unwrap_or(true),
            exec: exec.unwrap_or_default(),
        };
        let mut p = PipelineConfig::new(e.require("step1_target_n")?, budget);
        if let Some(ks) = e.0.get("step2_target_ks") {
            p.step2_target_ks = ks
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|err| CliError::config(format!("step2_target_ks: {err}"))))
                .collect::<Result<_>>()?;
        }
        p.concurrent = e.get("concurrent")?.unwrap_or(true);
        p.penalty_lambda = e.get("penalty_lambda")?;
        p.scale_range = e.get("scale_range")?.unwrap_or(p.scale_range);
        if let Some(v) = e.choice(
            "power_policy",
            &[("carry_forward", PowerPolicy::CarryForward), ("recalibrate", PowerPolicy::Recalibrate)],
        )? {
            p.power_policy = v;
        }
        if let Some(v) = e.choice(
            "sub_universe_rule",
            &[
                ("best_portfolio", SubUniverseRule::BestPortfolio),
                ("top_assets_by_singleton_score", SubUniverseRule::TopAssetsBySingletonScore),
            ],
        )? {
            p.sub_universe_rule = v;
        }
        p.cooling.initial_temperature = e.get("sa_initial_temperature")?;
        p.cooling.ratio = e.get("sa_ratio")?.unwrap_or(p.cooling.ratio);
        p.cooling.calibration_samples = e.get("sa_calibration_samples")?.unwrap_or(p.cooling.calibration_samples);
        p.ga.population_size = e.get("ga_population")?.unwrap_or(p.ga.population_size);
        p.ga.generations = e.get("ga_generations")?.unwrap_or(p.ga.generations);
        p.ga.crossover_rate = e.get("ga_crossover_rate")?.unwrap_or(p.ga.crossover_rate);
        p.ga.mutation_rate = e.get("ga_mutation_rate")?.unwrap_or(p.ga.mutation_rate);
        p.ga.elitism_count = e.get("ga_elitism")?.unwrap_or(p.ga.elitism_count);
        p.ga.tournament_size = e.get("ga_tournament")?.unwrap_or(p.ga.tournament_size);
        p.tabu.tenure = e.get("tabu_tenure")?;
        p.tabu.restart_after = e.get("tabu_restart_after")?.unwrap_or(p.tabu.restart_after);
        p.sbm_iterations = e.get("sbm_iterations")?;
        p.sbm_epsilon = e.get("sbm_epsilon")?;
        p.sbm_xi0 = e.get("sbm_xi0")?;
        p.risk_free = e.get("risk_free")?.unwrap_or(0.0);

        Ok(Self { prices, index, format, days, beta_range, pipeline: p, entries })
    }

    pub fn seed(&self) -> u64 {
        self.pipeline.per_solver_budget.seed
    }

    /// Loads, validates and assembles the universe described by the config.
    pub fn universe(&self) -> Result<(Universe, ValidationReport)> {
        let series = load_prices(&self.prices, self.format)?;
        let index = load_index(&self.index, self.format)?;
        let report = validate_universe(&series, self.days, self.beta_range, &index)?;
        let u = Universe::from_validated(&series, &report, &index, self.days)?;
        Ok((u, report))
    }
}

/// Loads a price file that must hold exactly one series.
pub fn load_index(path: &Path, format: PriceFormat) -> Result<PriceSeries> {
    let mut all = load_prices(path, format)?;
    if all.len() != 1 {
        return Err(CliError::domain(
            "InvalidIndexSeries",
            "market_data",
            format!("{} holds {} series, expected exactly one", path.display(), all.len()),
        ));
    }
    Ok(all.pop_first().expect("one series").1)
}
