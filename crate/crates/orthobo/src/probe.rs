//! Frozen-surrogate probes: build a history, fit once, rebuild the
//! acquisition repeatedly at fixed probe points.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use orthobo_core::diagnostics::{variance_probe, GpProbeState, ProbeConfig, ProbeReport, ProbeState, TpeProbeState, DEFAULT_PROBES, DEFAULT_REPEATS, DEFAULT_TOP_K};
use orthobo_core::engine::{run_bo, Method, RunConfig};
use orthobo_core::gp::{fit_map, laplace_posterior, GpFitConfig, HyperPrior};
use orthobo_core::kernels::{KernelFamily, KernelSpec};
use orthobo_core::math::rng::RngState;
use orthobo_core::acquisition::CvConfig;
use orthobo_core::benchmarks::Objective;
use orthobo_core::{GpFit, ObservationSet, ParamPosterior};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeEstimator {
    McEi,
    OrthEi,
    TpeMc,
    TpeOrth,
}

impl ProbeEstimator {
    pub const ALL: [ProbeEstimator; 4] = [Self::McEi, Self::OrthEi, Self::TpeMc, Self::TpeOrth];

    pub fn name(self) -> &'static str {
        match self {
            Self::McEi => "mc-ei",
            Self::OrthEi => "orth-ei",
            Self::TpeMc => "tpe-mc",
            Self::TpeOrth => "tpe-orth",
        }
    }

    pub fn is_tpe(self) -> bool {
        matches!(self, Self::TpeMc | Self::TpeOrth)
    }
}

impl fmt::Display for ProbeEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeEstimator {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| orthobo_core::Error::UnknownName { kind: "estimator", name: s.to_owned() }.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryDesign {
    /// The BO initial design for `history_seed`.
    Sobol,
    /// Independent uniform points.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeRequest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub objective: String,
    /// Picks the surrogate family; both the plain and the orthogonalized
    /// estimator are always measured on the same draws.
    pub estimator: ProbeEstimator,
    pub kernel: KernelFamily,
    pub mc_samples: usize,
    pub repeats: usize,
    pub probes: usize,
    /// Seeds the probe set and the rebuild schedule.
    pub seed: u64,
    pub top_k: usize,
    pub history: usize,
    pub design: HistoryDesign,
    /// Seeds the history and the hyperparameter fit.
    pub history_seed: u64,
    pub cv: CvConfig,
    pub gp: GpFitConfig,
    pub tpe_quantile: f64,
}

impl Default for ProbeRequest {
    fn default() -> Self {
        Self {
            name: None,
            objective: "michalewicz:10".into(),
            estimator: ProbeEstimator::OrthEi,
            kernel: KernelFamily::Matern52Ard,
            mc_samples: 32,
            repeats: DEFAULT_REPEATS,
            probes: DEFAULT_PROBES,
            seed: 0,
            top_k: DEFAULT_TOP_K,
            history: 32,
            design: HistoryDesign::Sobol,
            history_seed: 0,
            cv: CvConfig::default(),
            gp: GpFitConfig::default(),
            tpe_quantile: 0.2,
        }
    }
}

impl ProbeRequest {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let family = if self.estimator.is_tpe() { "tpe".to_string() } else { self.kernel.to_string() };
            format!("{}-{}-s{}", self.objective.replace(':', ""), family, self.mc_samples)
        })
    }

    pub fn validate(&self) -> Result<Objective> {
        let objective: Objective = self.objective.parse()?;
        let bad = |msg: &str| Err(HarnessError::InvalidSpec(format!("probe {}: {msg}", self.label())));
        if self.history == 0 {
            return bad("history must be at least 1");
        }
        if self.repeats < 2 {
            return bad("repeats must be at least 2");
        }
        if self.probes == 0 || self.mc_samples == 0 {
            return bad("probes and mc_samples must be positive");
        }
        if !(self.tpe_quantile > 0.0 && self.tpe_quantile < 1.0) {
            return bad("tpe_quantile must lie in (0, 1)");
        }
        Ok(objective)
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig { probes: self.probes, repeats: self.repeats, samples: self.mc_samples, seed: self.seed, top_k: self.top_k, cv: self.cv }
    }
}

/// Evaluated history the surrogate is fitted on.
pub fn probe_history(req: &ProbeRequest) -> Result<ObservationSet> {
    let objective = req.validate()?;
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = match req.design {
        HistoryDesign::Sobol => {
            let cfg = RunConfig {
                objective: req.objective.clone(),
                method: Method::SobolRandom,
                budget: 0,
                n_init: req.history,
                seed: req.history_seed,
                ..RunConfig::default()
            };
            run_bo(&cfg)?.iterations.into_iter().map(|r| (r.lambda, r.y_clean)).unzip()
        }
        HistoryDesign::Random => {
            let mut rng = RngState::new(req.history_seed).derive(0);
            (0..req.history)
                .map(|_| {
                    let x: Vec<f64> = (0..objective.dim).map(|_| rng.uniform()).collect();
                    let y = objective.evaluate(&x);
                    (x, y)
                })
                .unzip()
        }
    };
    Ok(ObservationSet::new(x, y)?)
}

/// Surrogate state that stays fixed for every rebuild.
#[derive(Debug, Clone)]
pub enum FrozenSurrogate {
    Gp { fit: GpFit, posterior: ParamPosterior, f_star: f64 },
    Tpe { data: ObservationSet, quantile: f64 },
}

impl FrozenSurrogate {
    pub fn build(req: &ProbeRequest) -> Result<Self> {
        let data = probe_history(req)?;
        if req.estimator.is_tpe() {
            return Ok(Self::Tpe { data, quantile: req.tpe_quantile });
        }
        let spec = KernelSpec::new(req.kernel, data.dim());
        let prior = HyperPrior::default_for(&spec);
        let fit = fit_map(&data, spec, &prior, &req.gp, None, &mut RngState::new(req.history_seed).derive(1))?;
        let posterior = laplace_posterior(&fit, &req.gp);
        Ok(Self::Gp { fit, posterior, f_star: data.f_star_std() })
    }

    pub fn state(&self) -> Box<dyn ProbeState<f64> + '_> {
        match self {
            Self::Gp { fit, posterior, f_star } => Box::new(GpProbeState { fit, posterior, f_star: *f_star }),
            Self::Tpe { data, quantile } => Box::new(TpeProbeState { data, quantile: *quantile }),
        }
    }
}

pub fn run_probe(req: &ProbeRequest) -> Result<ProbeReport> {
    let frozen = FrozenSurrogate::build(req)?;
    let state = frozen.state();
    let report = variance_probe(state.as_ref(), &req.probe_config())?;
    Ok(report)
}

/// Flat `probe_id,repeat_id,estimator,value` rows, optionally for one
/// estimator only.
pub fn write_probe_csv<W: Write>(report: &ProbeReport, only: Option<&str>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["probe_id", "repeat_id", "estimator", "value"])?;
    for est in report.estimators.iter().filter(|e| only.is_none_or(|name| e.estimator == name)) {
        for (p, row) in est.values.iter().enumerate() {
            for (r, v) in row.iter().enumerate() {
                wtr.write_record([p.to_string(), r.to_string(), est.estimator.clone(), v.to_string()])?;
            }
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimator: ProbeEstimator) -> ProbeRequest {
        ProbeRequest { objective: "levy:3".into(), estimator, mc_samples: 8, repeats: 3, probes: 5, history: 10, ..ProbeRequest::default() }
    }

    #[test]
    fn gp_probe_is_reproducible() {
        let req = small(ProbeEstimator::OrthEi);
        let a = run_probe(&req).unwrap();
        let b = run_probe(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.raw().estimator, "mc-ei");
        assert_eq!(a.orth().values.len(), 5);
        assert_eq!(a.orth().values[0].len(), 3);
    }

    #[test]
    fn tpe_probe_uses_random_history() {
        let req = ProbeRequest { design: HistoryDesign::Random, ..small(ProbeEstimator::TpeOrth) };
        let data = probe_history(&req).unwrap();
        assert_eq!(data.len(), 10);
        let report = run_probe(&req).unwrap();
        assert_eq!(report.orth().estimator, "tpe-orth");
        assert!(report.surrogate.starts_with("tpe"));
    }

    #[test]
    fn sobol_history_matches_initial_design() {
        let req = small(ProbeEstimator::McEi);
        let data = probe_history(&req).unwrap();
        let cfg = RunConfig { objective: "levy:3".into(), budget: 0, n_init: 10, method: Method::SobolRandom, ..RunConfig::default() };
        let trace = run_bo(&cfg).unwrap();
        assert_eq!(data.x()[4], trace.iterations[4].lambda);
    }

    #[test]
    fn csv_rows_and_filter() {
        let report = run_probe(&small(ProbeEstimator::OrthEi)).unwrap();
        let mut all = Vec::new();
        write_probe_csv(&report, None, &mut all).unwrap();
        assert_eq!(String::from_utf8(all).unwrap().lines().count(), 1 + 2 * 5 * 3);
        let mut one = Vec::new();
        write_probe_csv(&report, Some("orth-ei"), &mut one).unwrap();
        let text = String::from_utf8(one).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("orth-ei")));
    }

    #[test]
    fn estimator_names_parse() {
        for e in ProbeEstimator::ALL {
            assert_eq!(e.name().parse::<ProbeEstimator>().unwrap(), e);
        }
        assert!("ei".parse::<ProbeEstimator>().is_err());
        assert!(ProbeRequest { repeats: 1, ..small(ProbeEstimator::McEi) }.validate().is_err());
    }
}
