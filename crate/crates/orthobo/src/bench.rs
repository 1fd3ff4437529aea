//! Per-step wall-clock comparison of acquisition methods at a fixed history
//! size.

use std::fmt::Write as _;

use orthobo_core::engine::{BoLoop, Method, RunConfig};
use orthobo_core::kernels::{KernelFamily, KernelSpec};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRequest {
    pub objective: String,
    pub kernel: KernelFamily,
    pub mc_samples: usize,
    pub history: usize,
    pub repeats: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Default for BenchRequest {
    fn default() -> Self {
        Self {
            objective: "levy:16".into(),
            kernel: KernelFamily::Matern52Ard,
            mc_samples: 512,
            history: 64,
            repeats: 3,
            seed: 0,
            methods: vec![Method::McEi, Method::OrthEi],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub samples: usize,
    pub score_dim: usize,
    pub history: usize,
    /// Median over repeats.
    pub step_ms: f64,
    pub fit_ms: f64,
    /// `step_ms` relative to the first method.
    pub ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times one BO step per repeat, each from a fresh loop whose initial design
/// has `history` points, so every timed step sees the same history size.
pub fn run_bench(req: &BenchRequest) -> Result<Vec<BenchRow>> {
    if req.repeats == 0 || req.methods.is_empty() {
        return Err(HarnessError::InvalidSpec("bench needs at least one repeat and one method".into()));
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(req.methods.len());
    for &method in &req.methods {
        let mut steps = Vec::with_capacity(req.repeats);
        let mut fits = Vec::with_capacity(req.repeats);
        let mut score_dim = 0;
        for r in 0..req.repeats {
            let cfg = RunConfig {
                objective: req.objective.clone(),
                method,
                kernel: req.kernel,
                budget: 1,
                n_init: req.history,
                mc_samples: req.mc_samples,
                seed: req.seed.wrapping_add(r as u64),
                record_timing: true,
                ..RunConfig::default()
            };
            let mut run = BoLoop::new(cfg)?;
            score_dim = KernelSpec::new(req.kernel, run.records()[0].lambda.len()).theta_len();
            let rec = run.step()?;
            steps.push(rec.step_ms.unwrap_or(f64::NAN));
            fits.push(rec.model_ms.as_ref().map_or(0.0, |m| m.iter().sum()));
        }
        let step_ms = median(steps);
        let ratio = rows.first().map_or(1.0, |first| step_ms / first.step_ms);
        rows.push(BenchRow { method, samples: req.mc_samples, score_dim, history: req.history, step_ms, fit_ms: median(fits), ratio });
    }
    Ok(rows)
}

pub fn render_bench(rows: &[BenchRow]) -> String {
    let mut s = String::from("| method | S | score dim | history | step ms | fit ms | ratio |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {} | {} | {} | {:.1} | {:.1} | {:.2} |", r.method, r.samples, r.score_dim, r.history, r.step_ms, r.fit_ms, r.ratio);
    }
    s
}
