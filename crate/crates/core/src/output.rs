//! Running whole experiments and writing their artefacts.
//!
//! Replications run in parallel, but every result is collected before any
//! file is written and rows are emitted in replication order. The CSV files
//! are therefore identical for any thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EnvironmentConfig, RunConfig};
use crate::error::{Error, Result};
use crate::runner::{replication_seed, run_replication_with, ReplicationResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const REGRET_FILE: &str = "regret.csv";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const META_FILE: &str = "meta.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut cfg = cfg.clone();
        if let Some(out) = &self.out {
            cfg.output.directory = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.run.base_seed = seed;
        }
        cfg
    }
}

#[derive(Debug, Serialize)]
struct RegretRow<'a> {
    run_id: &'a str,
    replication: usize,
    depth: Option<usize>,
    algorithm: &'a str,
    episode: usize,
    agent: usize,
    instant_regret: f64,
    cumulative_regret: f64,
}

#[derive(Debug, Serialize)]
struct CoverageRow<'a> {
    run_id: &'a str,
    replication: usize,
    step: u64,
    coverage_fraction: f64,
    min_count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub replication: usize,
    pub step: u64,
    pub agent: usize,
    pub state: usize,
    pub action: usize,
    pub sigma_mean: Option<f64>,
    pub beta: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    schema_version: u32,
    run_id: String,
    config: &'a RunConfig,
    seeds: Vec<u64>,
    code_version: &'static str,
    wall_time_seconds: f64,
    total_steps: u64,
    final_regret: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    depth: usize,
    run_id: String,
    directory: String,
    regret: String,
    coverage: String,
    meta: String,
    traces: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    runs: Vec<ManifestEntry>,
}

/// Results of a completed run, in replication order.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub directory: PathBuf,
    pub run_id: String,
    pub replications: Vec<ReplicationResult>,
}

impl ExperimentSummary {
    /// `Regret(T)` at the final episode of each replication.
    pub fn final_regret(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.ledger.total()).collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn finite(file: &'static str, column: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { file, column, value })
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Io { path: "<thread pool>".into(), source: std::io::Error::other(e) })
}

fn simulate(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<(ReplicationResult, Vec<TraceRow>)>> {
    let traces = cfg.output.emit_traces;
    pool(threads)?.install(|| {
        (0..cfg.run.replications)
            .into_par_iter()
            .map(|r| {
                let mut rows = Vec::new();
                let result = run_replication_with(cfg, r, &mut |rec| {
                    if traces {
                        rows.push(TraceRow {
                            replication: r,
                            step: rec.step,
                            agent: rec.agent,
                            state: rec.state,
                            action: rec.outcome.action,
                            sigma_mean: rec.snapshot.map(|s| s.sigma_mean()),
                            beta: rec.snapshot.map(|s| s.beta.value()),
                            delta: rec.outcome.delta,
                        });
                    }
                })?;
                Ok((result, rows))
            })
            .collect()
    })
}

fn write_regret(path: &Path, cfg: &RunConfig, results: &[ReplicationResult]) -> Result<()> {
    let run_id = cfg.run_id();
    let depth = match cfg.environment {
        EnvironmentConfig::DeepSea { depth, .. } => Some(depth),
        EnvironmentConfig::RandomMdp { .. } => None,
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record([
        "run_id",
        "replication",
        "depth",
        "algorithm",
        "episode",
        "agent",
        "instant_regret",
        "cumulative_regret",
    ])?;
    for res in results {
        let cumulative = res.ledger.cumulative_by_agent();
        for (episode, row) in cumulative.iter().enumerate() {
            for (agent, cum) in row.iter().enumerate() {
                w.serialize(RegretRow {
                    run_id: &run_id,
                    replication: res.replication,
                    depth,
                    algorithm: cfg.algorithm.name(),
                    episode,
                    agent,
                    instant_regret: finite(REGRET_FILE, "instant_regret", res.ledger.instant(episode, agent))?,
                    cumulative_regret: finite(REGRET_FILE, "cumulative_regret", *cum)?,
                })?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.display().to_string(), source },
        other => Error::Io { path: path.display().to_string(), source: std::io::Error::other(format!("{other:?}")) },
    }
}

fn write_coverage(path: &Path, cfg: &RunConfig, results: &[ReplicationResult]) -> Result<()> {
    let run_id = cfg.run_id();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["run_id", "replication", "step", "coverage_fraction", "min_count"])?;
    for res in results {
        for &(step, fraction, min_count) in &res.coverage {
            w.serialize(CoverageRow {
                run_id: &run_id,
                replication: res.replication,
                step,
                coverage_fraction: finite(COVERAGE_FILE, "coverage_fraction", fraction)?,
                min_count,
            })?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_traces(path: &Path, traces: &[Vec<TraceRow>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["replication", "step", "agent", "state", "action", "sigma_mean", "beta", "delta"])?;
    for row in traces.iter().flatten() {
        finite(TRACES_FILE, "delta", row.delta)?;
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))
}

/// Runs every replication of `cfg` and writes `regret.csv`,
/// `coverage.csv`, `meta.json` and, if enabled, `traces.csv` into the
/// output directory. On failure any file this call created is removed.
pub fn run_experiment(cfg: &RunConfig, opts: &RunOptions) -> Result<ExperimentSummary> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let started = Instant::now();
    let dir = cfg.output.directory.clone();
    info!("{}: {} replications of {} episodes", cfg.run_id(), cfg.run.replications, cfg.run.episodes);
    let (results, traces): (Vec<_>, Vec<_>) = simulate(&cfg, opts.threads)?.into_iter().unzip();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let outcome = (|| -> Result<()> {
        let regret = dir.join(REGRET_FILE);
        written.push(regret.clone());
        write_regret(&regret, &cfg, &results)?;
        let coverage = dir.join(COVERAGE_FILE);
        written.push(coverage.clone());
        write_coverage(&coverage, &cfg, &results)?;
        if cfg.output.emit_traces {
            let path = dir.join(TRACES_FILE);
            written.push(path.clone());
            write_traces(&path, &traces)?;
        }
        let meta = Meta {
            schema_version: SCHEMA_VERSION,
            run_id: cfg.run_id(),
            config: &cfg,
            seeds: (0..cfg.run.replications).map(|r| replication_seed(&cfg, r)).collect(),
            code_version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: started.elapsed().as_secs_f64(),
            total_steps: results.iter().map(|r| r.steps).sum(),
            final_regret: results.iter().map(|r| r.ledger.total()).collect(),
        };
        let path = dir.join(META_FILE);
        written.push(path.clone());
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(io_err(&path))
    })();
    if let Err(e) = outcome {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        return Err(e);
    }
    info!("{}: done in {:.2}s", cfg.run_id(), started.elapsed().as_secs_f64());
    Ok(ExperimentSummary { directory: dir, run_id: cfg.run_id(), replications: results })
}

/// Runs `cfg` once per depth into `<out>/depth_<d>` and writes
/// `manifest.json` with paths relative to `<out>`.
pub fn sweep(cfg: &RunConfig, depths: &[usize], opts: &RunOptions) -> Result<Vec<ExperimentSummary>> {
    let base = opts.apply(cfg);
    if base.environment.depth().is_none() {
        return Err(crate::config::ConfigError::Invalid {
            field: "environment".into(),
            message: "a depth sweep requires the deep_sea environment".into(),
            condition: None,
        }
        .into());
    }
    let root = base.output.directory.clone();
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let mut summaries = Vec::with_capacity(depths.len());
    let mut runs = Vec::with_capacity(depths.len());
    for &depth in depths {
        let mut c = base.clone();
        if let EnvironmentConfig::DeepSea { depth: d, .. } = &mut c.environment {
            *d = depth;
        }
        let rel = format!("depth_{depth}");
        c.output.directory = root.join(&rel);
        let summary = run_experiment(&c, &RunOptions { threads: opts.threads, ..RunOptions::default() })?;
        runs.push(ManifestEntry {
            depth,
            run_id: summary.run_id.clone(),
            regret: format!("{rel}/{REGRET_FILE}"),
            coverage: format!("{rel}/{COVERAGE_FILE}"),
            meta: format!("{rel}/{META_FILE}"),
            traces: c.output.emit_traces.then(|| format!("{rel}/{TRACES_FILE}")),
            directory: rel,
        });
        summaries.push(summary);
    }
    let path = root.join(MANIFEST_FILE);
    let manifest = Manifest { schema_version: SCHEMA_VERSION, runs };
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(summaries)
}
