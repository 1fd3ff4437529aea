//! Summary tables over a finished experiment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use orthobo_core::diagnostics::ProbeReport;
use orthobo_core::engine::Method;

use crate::experiment::{load_trace, mean_ci, ResultManifest};
use crate::error::{IoContext, Result};

/// `100·(orth/raw − 1)`, negative when the orthogonalized variance is lower.
pub fn percent_change(raw: f64, orth: f64) -> f64 {
    100.0 * (orth / raw - 1.0)
}

pub fn format_percent(value: f64) -> String {
    format!("{value:.2}%")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub cell: String,
    pub method: Method,
    pub objective: String,
    pub runs: usize,
    pub mean_final_regret: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub probe: String,
    pub surrogate: String,
    pub samples: usize,
    pub raw: f64,
    pub orth: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub probe: String,
    pub estimator: String,
    pub mean_variance: f64,
    pub mean_log_variance: f64,
    pub top1_agreement: f64,
    pub flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingRun {
    pub artifact: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStatus {
    Complete,
    Partial,
    Empty,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub regret: Vec<RegretRow>,
    pub variance: Vec<VarianceRow>,
    pub ranking: Vec<RankingRow>,
    pub missing: Vec<MissingRun>,
}

impl Report {
    pub fn status(&self) -> ReportStatus {
        if !self.missing.is_empty() {
            ReportStatus::Partial
        } else if self.regret.is_empty() && self.variance.is_empty() {
            ReportStatus::Empty
        } else {
            ReportStatus::Complete
        }
    }

    pub fn variance_rows(probe: &str, report: &ProbeReport) -> (VarianceRow, Vec<RankingRow>) {
        let (raw, orth) = (report.raw().mean_variance, report.orth().mean_variance);
        let row = VarianceRow {
            probe: probe.to_string(),
            surrogate: report.surrogate.clone(),
            samples: report.config.samples,
            raw,
            orth,
            percent: percent_change(raw, orth),
        };
        let ranking = report
            .estimators
            .iter()
            .map(|e| RankingRow {
                probe: probe.to_string(),
                estimator: e.estimator.clone(),
                mean_variance: e.mean_variance,
                mean_log_variance: e.mean_log_variance,
                top1_agreement: e.top1_agreement,
                flip_rate: e.flip_rate,
            })
            .collect();
        (row, ranking)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("## Final regret\n\n| cell | method | objective | runs | mean final regret | 95% CI |\n|---|---|---|---|---|---|\n");
        for r in &self.regret {
            let _ = writeln!(s, "| {} | {} | {} | {} | {:.6e} | {:.3e} |", r.cell, r.method, r.objective, r.runs, r.mean_final_regret, r.ci95);
        }
        s.push_str("\n## Probe variance\n\n| probe | surrogate | S | raw | orth | change |\n|---|---|---|---|---|---|\n");
        for r in &self.variance {
            let _ = writeln!(s, "| {} | {} | {} | {:.3e} | {:.3e} | {} |", r.probe, r.surrogate, r.samples, r.raw, r.orth, format_percent(r.percent));
        }
        s.push_str("\n## Ranking stability\n\n| probe | estimator | probe variance | log-scale variance | top-1 agreement | flip rate |\n|---|---|---|---|---|---|\n");
        for r in &self.ranking {
            let _ = writeln!(
                s,
                "| {} | {} | {:.3e} | {:.3e} | {:.3} | {:.3} |",
                r.probe, r.estimator, r.mean_variance, r.mean_log_variance, r.top1_agreement, r.flip_rate
            );
        }
        if !self.missing.is_empty() {
            s.push_str("\n## Missing runs\n\n");
            for m in &self.missing {
                let _ = writeln!(s, "- {}: {}", m.artifact.display(), m.reason);
            }
        }
        s
    }
}

/// Builds the report from the manifest at `manifest_path`. Failed or
/// unreadable runs are listed as missing and left out of the tables.
pub fn build_report(manifest_path: &Path) -> Result<Report> {
    let manifest = ResultManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut report = Report::default();
    for cell in &manifest.cells {
        let mut finals = Vec::new();
        for run in &cell.runs {
            let reason = match (&run.status, load_trace(&root.join(&run.trace))) {
                (crate::experiment::RunStatus::Failed(msg), _) => msg.clone(),
                (_, Ok(trace)) => {
                    finals.push(trace.final_regret());
                    continue;
                }
                (_, Err(e)) => e.to_string(),
            };
            report.missing.push(MissingRun { artifact: run.trace.clone(), reason });
        }
        if finals.is_empty() {
            continue;
        }
        let (mean, ci) = mean_ci(&finals);
        report.regret.push(RegretRow {
            cell: cell.name.clone(),
            method: cell.method,
            objective: cell.objective.clone(),
            runs: finals.len(),
            mean_final_regret: mean,
            ci95: ci,
        });
    }
    for probe in &manifest.probes {
        let path = root.join(&probe.report);
        let loaded = match &probe.status {
            crate::experiment::RunStatus::Failed(msg) => Err(msg.clone()),
            _ => std::fs::read_to_string(&path)
                .at(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| serde_json::from_str::<ProbeReport>(&t).map_err(|e| e.to_string())),
        };
        match loaded {
            Ok(r) => {
                let (row, ranking) = Report::variance_rows(&probe.label, &r);
                report.variance.push(row);
                report.ranking.extend(ranking);
            }
            Err(reason) => report.missing.push(MissingRun { artifact: probe.report.clone(), reason }),
        }
    }
    Ok(report)
}
