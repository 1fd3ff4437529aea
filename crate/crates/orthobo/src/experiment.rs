//! Replicated runs, on-disk artifacts and manifest-driven replay.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! traces/<cell>/rep-000.json
//! aggregate/<cell>.csv
//! probes/<label>.json, probes/<label>.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use orthobo_core::diagnostics::ProbeReport;
use orthobo_core::engine::{run_bo, Method, RunConfig, RunTrace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, IoContext, Result};
use crate::probe::{run_probe, write_probe_csv, ProbeRequest};
use crate::spec::ExperimentSpec;

pub const MANIFEST_FILE: &str = "manifest.json";
const CI_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub replication: usize,
    pub seed: u64,
    /// Complete config, seed included; enough to rerun this trace.
    pub config: RunConfig,
    /// Relative to the manifest directory.
    pub trace: PathBuf,
    pub status: RunStatus,
    pub wall_ms: f64,
    pub mean_step_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub name: String,
    pub method: Method,
    pub objective: String,
    pub aggregate: PathBuf,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub label: String,
    pub request: ProbeRequest,
    pub report: PathBuf,
    pub csv: PathBuf,
    pub status: RunStatus,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub version: String,
    pub spec: ExperimentSpec,
    pub cells: Vec<CellEntry>,
    #[serde(default)]
    pub probes: Vec<ProbeEntry>,
}

impl ResultManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::InvalidManifest(format!("{}: {e}", path.display())))
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|c| c.runs.is_empty()) && self.probes.is_empty()
    }
}

/// Per-iteration mean regret across replications with a normal 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean_regret: f64,
    pub ci95: f64,
    pub replications: usize,
}

/// Mean and `1.96·sd/√n` (sample sd); the half-width is NaN for `n < 2`.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, CI_Z * var.sqrt() / n.sqrt())
}

/// One row per iteration, `0..=T`; iteration 0 is the initial design.
pub fn aggregate_traces(traces: &[RunTrace]) -> Vec<AggregateRow> {
    let curves: Vec<Vec<f64>> = traces.iter().map(RunTrace::regret_by_iteration).collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|t| {
            let column: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            let (mean_regret, ci95) = mean_ci(&column);
            AggregateRow { iteration: t, mean_regret, ci95, replications: column.len() }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["iteration", "mean_regret", "ci95", "replications"])?;
    for r in rows {
        wtr.write_record([r.iteration.to_string(), r.mean_regret.to_string(), r.ci95.to_string(), r.replications.to_string()])?;
    }
    wtr.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
}

pub fn trace_json(trace: &RunTrace) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(trace)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn probe_json(report: &ProbeReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn probe_csv(report: &ProbeReport) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_probe_csv(report, None, &mut bytes)?;
    Ok(bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, bytes).at(path)
}

pub fn load_trace(path: &Path) -> Result<RunTrace> {
    Ok(serde_json::from_str(&fs::read_to_string(path).at(path)?)?)
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Job {
    cell: usize,
    entry: RunEntry,
}

fn execute(root: &Path, mut job: Job) -> (Job, Option<RunTrace>) {
    let start = Instant::now();
    let outcome = run_bo(&job.entry.config).map_err(HarnessError::from).and_then(|trace| {
        write_file(&root.join(&job.entry.trace), &trace_json(&trace)?)?;
        Ok(trace)
    });
    job.entry.wall_ms = elapsed_ms(start);
    job.entry.mean_step_ms = job.entry.wall_ms / job.entry.config.budget.max(1) as f64;
    match outcome {
        Ok(trace) => (job, Some(trace)),
        Err(e) => {
            log::error!("{}: {e}", job.entry.trace.display());
            job.entry.status = RunStatus::Failed(e.to_string());
            (job, None)
        }
    }
}

fn execute_probe(root: &Path, entry: &mut ProbeEntry) {
    let start = Instant::now();
    let outcome = run_probe(&entry.request).map_err(HarnessError::from).and_then(|report| {
        write_file(&root.join(&entry.report), &probe_json(&report)?)?;
        write_file(&root.join(&entry.csv), &probe_csv(&report)?)
    });
    entry.wall_ms = elapsed_ms(start);
    if let Err(e) = outcome {
        log::error!("probe {}: {e}", entry.label);
        entry.status = RunStatus::Failed(e.to_string());
    }
}

/// Runs every cell × replication and every probe, writes all artifacts
/// under `out` and returns the manifest (also written to disk). Individual
/// failures are recorded, not propagated.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ResultManifest> {
    let cells = spec.resolve()?;
    fs::create_dir_all(out).at(out)?;
    let mut entries: Vec<CellEntry> = cells
        .iter()
        .map(|c| CellEntry {
            name: c.name.clone(),
            method: c.config.method,
            objective: c.config.objective.clone(),
            aggregate: PathBuf::from("aggregate").join(format!("{}.csv", c.name)),
            runs: Vec::with_capacity(spec.replications),
        })
        .collect();
    let jobs: Vec<Job> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            (0..spec.replications).map(move |r| {
                let seed = spec.replication_seed(r);
                Job {
                    cell: i,
                    entry: RunEntry {
                        replication: r,
                        seed,
                        config: RunConfig { seed, ..c.config.clone() },
                        trace: PathBuf::from("traces").join(&c.name).join(format!("rep-{r:03}.json")),
                        status: RunStatus::Ok,
                        wall_ms: 0.0,
                        mean_step_ms: 0.0,
                    },
                }
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| HarnessError::InvalidSpec(format!("cannot start {} workers: {e}", spec.jobs)))?;
    let finished: Vec<(Job, Option<RunTrace>)> = pool.install(|| jobs.into_par_iter().map(|job| execute(out, job)).collect());

    let mut traces: Vec<Vec<RunTrace>> = vec![Vec::new(); entries.len()];
    for (job, trace) in finished {
        entries[job.cell].runs.push(job.entry);
        if let Some(trace) = trace {
            traces[job.cell].push(trace);
        }
    }
    for (entry, cell_traces) in entries.iter().zip(&traces) {
        write_file(&out.join(&entry.aggregate), &aggregate_csv(&aggregate_traces(cell_traces))?)?;
    }

    let mut probes: Vec<ProbeEntry> = spec
        .probes
        .iter()
        .map(|req| {
            let label = req.label();
            ProbeEntry {
                report: PathBuf::from("probes").join(format!("{label}.json")),
                csv: PathBuf::from("probes").join(format!("{label}.csv")),
                label,
                request: req.clone(),
                status: RunStatus::Ok,
                wall_ms: 0.0,
            }
        })
        .collect();
    pool.install(|| probes.par_iter_mut().for_each(|p| execute_probe(out, p)));

    let manifest = ResultManifest { version: env!("CARGO_PKG_VERSION").to_string(), spec: spec.clone(), cells: entries, probes };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_file(&out.join(MANIFEST_FILE), &bytes)?;
    Ok(manifest)
}

/// Artifacts regenerated from a manifest and compared byte for byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayOutcome {
    pub matched: Vec<PathBuf>,
    pub mismatched: Vec<PathBuf>,
    /// Recorded as failed in the manifest, so not replayed.
    pub skipped: Vec<PathBuf>,
}

impl ReplayOutcome {
    pub fn is_identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

fn compare(root: &Path, rel: &Path, fresh: &[u8], outcome: &mut ReplayOutcome) {
    let same = fs::read(root.join(rel)).map(|old| old == fresh).unwrap_or(false);
    if same { &mut outcome.matched } else { &mut outcome.mismatched }.push(rel.to_path_buf());
}

/// Reruns every recorded trace, aggregate and probe from the manifest at
/// `manifest_path` and compares against the stored bytes.
pub fn replay(manifest_path: &Path) -> Result<ReplayOutcome> {
    let manifest = ResultManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.spec.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidManifest(format!("cannot start workers: {e}")))?;
    let mut outcome = ReplayOutcome::default();
    for cell in &manifest.cells {
        let reruns: Vec<(&RunEntry, Result<RunTrace>)> =
            pool.install(|| cell.runs.par_iter().filter(|r| r.status.is_ok()).map(|r| (r, run_bo(&r.config).map_err(HarnessError::from))).collect());
        let mut traces = Vec::with_capacity(reruns.len());
        for (run, trace) in reruns {
            match trace {
                Ok(trace) => {
                    compare(root, &run.trace, &trace_json(&trace)?, &mut outcome);
                    traces.push(trace);
                }
                Err(_) => outcome.mismatched.push(run.trace.clone()),
            }
        }
        outcome.skipped.extend(cell.runs.iter().filter(|r| !r.status.is_ok()).map(|r| r.trace.clone()));
        compare(root, &cell.aggregate, &aggregate_csv(&aggregate_traces(&traces))?, &mut outcome);
    }
    for probe in &manifest.probes {
        if !probe.status.is_ok() {
            outcome.skipped.push(probe.report.clone());
            continue;
        }
        match run_probe(&probe.request) {
            Ok(report) => {
                compare(root, &probe.report, &probe_json(&report)?, &mut outcome);
                compare(root, &probe.csv, &probe_csv(&report)?, &mut outcome);
            }
            Err(_) => outcome.mismatched.push(probe.report.clone()),
        }
    }
    Ok(outcome)
}
