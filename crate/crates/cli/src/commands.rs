use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cqns_core::heuristics::{Objective, SolutionPool};
use cqns_core::market_data::{load_prices, validate_universe, BetaRange, PriceFormat};
use cqns_core::pipeline::{run_full, step2_qubo, verify_report, write_chart_csv, PipelineReport};
use cqns_core::qubo::{export_qubo, import_qubo, qubo_energy, qubo_to_ising};
use cqns_core::sbm::{run_sbm, write_trajectory_csv, SbmParams};
use cqns_core::scoring::calibrate_power_or_cubic;
use cqns_core::Portfolio;
use serde_json::json;

use crate::config::{load_index, RunConfig};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path.display(), e))
}

fn sidecar_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

pub fn ingest(prices: &Path, format: PriceFormat) -> Result<serde_json::Value> {
    let series = load_prices(prices, format)?;
    let summary: BTreeMap<&String, serde_json::Value> = series
        .iter()
        .map(|(t, s)| {
            let missing = s.adj_close.iter().filter(|p| p.is_none()).count();
            let non_positive = s.adj_close.iter().flatten().filter(|p| **p <= 0.0).count();
            (
                t,
                json!({
                    "observations": s.len(),
                    "first_date": s.dates.first().map(|d| d.to_string()),
                    "last_date": s.dates.last().map(|d| d.to_string()),
                    "missing": missing,
                    "non_positive": non_positive,
                }),
            )
        })
        .collect();
    Ok(json!({ "tickers": series.len(), "series": summary }))
}

pub fn validate(
    prices: &Path,
    index: &Path,
    days: usize,
    beta_min: f64,
    beta_max: f64,
    format: PriceFormat,
) -> Result<serde_json::Value> {
    let beta = BetaRange::new(beta_min, beta_max).map_err(|e| CliError::usage(e.to_string()))?;
    let series = load_prices(prices, format)?;
    let index = load_index(index, format)?;
    let report = validate_universe(&series, days, beta, &index)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

/// Writes the run directory. Fails if `out` already holds files.
pub fn emit_report(report: &PipelineReport, out: &Path, manifest: &Manifest) -> Result<()> {
    if out.exists() && fs::read_dir(out).map_err(|e| CliError::io(out.display(), e))?.next().is_some() {
        return Err(CliError::domain(
            "OutputExists",
            "cli",
            format!("{} is not empty; run directories are write-once", out.display()),
        ));
    }
    for sub in ["", "charts", "pools"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| CliError::io(d.display(), e))?;
    }
    let json = report.to_json().expect("report serializes");
    write_text(&out.join(REPORT_FILE), &(json + "\n"))?;
    let timings = serde_json::to_string_pretty(&report.timings).expect("timings serialize");
    write_text(&out.join("timings.json"), &(timings + "\n"))?;

    let csv_err = |p: &Path, e: std::io::Error| CliError::io(p.display(), e);
    let combined = out.join("charts.csv");
    write_chart_csv(&report.charts, create(&combined)?).map_err(|e| csv_err(&combined, e))?;
    for series in &report.charts {
        let p = out.join("charts").join(format!("{}.csv", series.file_stem()));
        write_chart_csv([series], create(&p)?).map_err(|e| csv_err(&p, e))?;
    }

    let write_pool = |name: String, pool: &SolutionPool| -> Result<()> {
        let p = out.join("pools").join(name);
        pool.write_jsonl(create(&p)?).map_err(|e| CliError::io(p.display(), e))
    };
    write_pool("step1.jsonl".into(), &report.step1.pool)?;
    for s in &report.step2 {
        write_pool(format!("step2_k{}.jsonl", s.k), &s.pool)?;
    }
    manifest.write(&out.join(MANIFEST_FILE))
}

fn summary(report: &PipelineReport) -> serde_json::Value {
    let fb = &report.final_best;
    json!({
        "final_best": {
            "stage": fb.stage,
            "k": fb.k,
            "source": fb.source,
            "cqns_final": fb.score.cqns_final,
            "sharpe": fb.score.sharpe,
            "tickers": fb.tickers,
        },
        "all_in_cqns": report.step1.all_in.cqns_final,
        "power": report.step1.power,
    })
}

pub fn optimize(config: &Path, seed: Option<u64>, out: Option<PathBuf>, argv: &[String]) -> Result<serde_json::Value> {
    let overrides: Vec<(&str, String)> = seed.map(|s| ("seed", s.to_string())).into_iter().collect();
    let rc = RunConfig::load(config, &overrides)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("cqns-run-seed{}", rc.seed())));
    let manifest = Manifest::new("optimize", argv)
        .with_config(config, &rc.entries)?
        .with_input("prices", &rc.prices)?
        .with_input("index", &rc.index)?
        .with_seed("base", rc.seed());
    let (u, _) = rc.universe()?;
    let report = run_full(&u, &rc.pipeline)?;
    emit_report(&report, &out, &manifest)?;
    let mut s = summary(&report);
    s["out"] = json!(out.display().to_string());
    Ok(s)
}

pub fn export(config: &Path, k: usize, out: &Path, argv: &[String]) -> Result<serde_json::Value> {
    let rc = RunConfig::load(config, &[])?;
    let (u, _) = rc.universe()?;
    if k == 0 || k > u.n() {
        return Err(CliError::usage(format!("--k {k} must lie in 1..={}", u.n())));
    }
    let (w, warning) = calibrate_power_or_cubic(&u);
    let q = step2_qubo(&u, &rc.pipeline, w, k)?;
    export_qubo(&q, out)?;
    Manifest::new("export-qubo", argv)
        .with_config(config, &rc.entries)?
        .with_input("prices", &rc.prices)?
        .with_input("index", &rc.index)?
        .write(&sidecar_manifest(out))?;
    Ok(json!({
        "path": out.display().to_string(),
        "n": q.n(),
        "k": k,
        "power": w.value(),
        "calibration_warning": warning.map(|e| e.to_string()),
        "max_abs_coefficient": q.max_abs_coefficient(),
        "tickers": u.tickers(),
    }))
}

pub struct SbmArgs {
    pub qubo: PathBuf,
    pub iterations: Option<usize>,
    pub epsilon: Option<f64>,
    pub xi0: Option<f64>,
    pub seed: u64,
    pub trajectory: Option<PathBuf>,
}

pub fn sbm_run(args: &SbmArgs, argv: &[String]) -> Result<serde_json::Value> {
    let q = import_qubo(&args.qubo)?;
    let model = qubo_to_ising(&q);
    let mut params = SbmParams::for_size(q.n()).with_seed(args.seed);
    if let Some(i) = args.iterations {
        params.iterations = i;
    }
    if let Some(e) = args.epsilon {
        params.epsilon = e;
    }
    params.xi0 = args.xi0;
    params.record_trajectory = args.trajectory.is_some();
    params.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let result = run_sbm(&model, &params)?;
    let selection = Portfolio::from_spins(&result.best_spins);
    let qe = qubo_energy(&q, &selection.to_binary())?;
    if let Some(path) = &args.trajectory {
        let samples = result.trajectory.as_deref().unwrap_or_default();
        write_trajectory_csv(samples, q.n(), create(path)?).map_err(|e| CliError::io(path.display(), e))?;
        Manifest::new("sbm-run", argv)
            .with_input("qubo", &args.qubo)?
            .with_seed("sbm", args.seed)
            .write(&sidecar_manifest(path))?;
    }
    Ok(json!({
        "n": q.n(),
        "ising_energy": result.best_energy,
        "qubo_energy": qe,
        "selection": selection.to_hex(),
        "cardinality": selection.cardinality(),
        "best_iteration": result.best_iteration,
        "iterations": result.iterations_run,
        "xi0": result.xi0_used,
    }))
}

/// Re-derives the universe from the run's manifest and re-verifies every
/// score in its report.
pub fn report(dir: &Path) -> Result<serde_json::Value> {
    let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
    manifest.check_inputs()?;
    let rc = RunConfig::from_entries(manifest.effective_config.clone())?;
    let (u, _) = rc.universe()?;
    let path = dir.join(REPORT_FILE);
    let file = File::open(&path).map_err(|e| CliError::io(path.display(), e))?;
    let report: PipelineReport = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::domain("MalformedReport", "pipeline", e))?;
    let checked = verify_report(&report, &u)?;
    for s in &report.step2 {
        let p = dir.join("pools").join(format!("step2_k{}.jsonl", s.k));
        let file = File::open(&p).map_err(|e| CliError::io(p.display(), e))?;
        let pool =
            SolutionPool::read_jsonl(BufReader::new(file), report.step1.sub_universe_indices.len(), Objective::Cqns)?;
        if pool.len() != s.pool.len() {
            return Err(CliError::domain(
                "ReportMismatch",
                "cli",
                format!("{} disagrees with report.json", p.display()),
            ));
        }
    }
    let mut s = summary(&report);
    s["verified_scores"] = json!(checked);
    Ok(s)
}

/// Prints `value` as one line of JSON.
pub fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io("stdout", e))?;
    writeln!(out).map_err(|e| CliError::io("stdout", e))
}
