//! The optimization loop: Sobol initial design, per-iteration surrogate
//! fits, ensemble-weighted (orthogonalized) acquisition, outer log,
//! multi-start maximization and trace recording.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{outer_log, CvConfig, GpSampleSet, Orthogonalizer, DEFAULT_LOG_FLOOR};
use crate::benchmarks::{inject_outliers, Objective};
use crate::ensemble::{aggregate, EnsembleConfig, EnsembleState};
use crate::error::{Error, Result};
use crate::gp::{fit_map, laplace_posterior, predictive_log_score, GpFit, GpFitConfig, HyperPrior, ObservationSet, ParamPosterior};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::math::rng::RngState;
use crate::math::search::{pattern_search, PatternSearch};
use crate::math::sobol::Sobol;
use crate::tpe::{tpe_bootstrap, tpe_fit, BootstrapEnsemble, TpeModel};

const LCB_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SobolRandom,
    McEi,
    Lcb,
    OrthEi,
    TpeMc,
    TpeOrth,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::SobolRandom, Method::McEi, Method::Lcb, Method::OrthEi, Method::TpeMc, Method::TpeOrth];

    pub fn name(self) -> &'static str {
        match self {
            Method::SobolRandom => "sobol-random",
            Method::McEi => "mc-ei",
            Method::Lcb => "lcb",
            Method::OrthEi => "orth-ei",
            Method::TpeMc => "tpe-mc",
            Method::TpeOrth => "tpe-orth",
        }
    }

    fn orthogonalized(self) -> bool {
        matches!(self, Method::OrthEi | Method::TpeOrth)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownName { kind: "method", name: s.to_string() })
    }
}

/// One ensemble member: a GP with a kernel family, or the TPE surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SurrogateKind {
    Gp(KernelFamily),
    Tpe,
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurrogateKind::Gp(k) => write!(f, "gp:{k}"),
            SurrogateKind::Tpe => f.write_str("tpe"),
        }
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "tpe" => Ok(SurrogateKind::Tpe),
            Some(("gp", kernel)) => Ok(SurrogateKind::Gp(kernel.parse()?)),
            _ => Err(Error::UnknownName { kind: "surrogate", name: s.to_string() }),
        }
    }
}

impl TryFrom<String> for SurrogateKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SurrogateKind> for String {
    fn from(s: SurrogateKind) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub raw_samples: usize,
    pub restarts: usize,
    /// Pattern-search evaluations per restart.
    pub local_budget: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { raw_samples: 512, restarts: 8, local_budget: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Registry name such as `hartmann6` or `ackley:8`.
    pub objective: String,
    pub method: Method,
    /// Number of BO iterations after the initial design.
    pub budget: usize,
    pub n_init: usize,
    pub mc_samples: usize,
    /// Kernel of the default GP member.
    pub kernel: KernelFamily,
    /// Explicit ensemble members; empty means the method's default single
    /// surrogate.
    pub surrogates: Vec<SurrogateKind>,
    pub cv: CvConfig,
    pub ensemble: EnsembleConfig,
    pub optimizer: OptimizerConfig,
    pub gp: GpFitConfig,
    pub tpe_quantile: f64,
    pub log_floor: f64,
    pub outlier_prob: f64,
    pub seed: u64,
    /// Record wall-clock timings in the trace (makes traces
    /// non-reproducible byte for byte).
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            objective: "hartmann6".into(),
            method: Method::OrthEi,
            budget: 60,
            n_init: 32,
            mc_samples: 512,
            kernel: KernelFamily::Matern52Ard,
            surrogates: Vec::new(),
            cv: CvConfig::default(),
            ensemble: EnsembleConfig::default(),
            optimizer: OptimizerConfig::default(),
            gp: GpFitConfig::default(),
            tpe_quantile: 0.2,
            log_floor: DEFAULT_LOG_FLOOR,
            outlier_prob: 0.0,
            seed: 0,
            record_timing: false,
        }
    }
}

impl RunConfig {
    /// Ensemble members after applying the method default.
    pub fn members(&self) -> Vec<SurrogateKind> {
        if !self.surrogates.is_empty() {
            return self.surrogates.clone();
        }
        match self.method {
            Method::SobolRandom => Vec::new(),
            Method::TpeMc | Method::TpeOrth => vec![SurrogateKind::Tpe],
            Method::McEi | Method::OrthEi | Method::Lcb => vec![SurrogateKind::Gp(self.kernel)],
        }
    }

    pub fn validate(&self) -> Result<Objective> {
        let objective: Objective = self.objective.parse()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_init == 0 {
            return bad("n_init must be at least 1".into());
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be at least 1".into());
        }
        let opt = &self.optimizer;
        if opt.restarts == 0 || opt.raw_samples < opt.restarts {
            return bad(format!("optimizer needs raw_samples >= restarts >= 1 (got {} and {})", opt.raw_samples, opt.restarts));
        }
        if !(self.tpe_quantile > 0.0 && self.tpe_quantile < 1.0) {
            return bad(format!("tpe_quantile must lie in (0, 1), got {}", self.tpe_quantile));
        }
        if !(self.log_floor > 0.0) {
            return bad(format!("log_floor must be positive, got {}", self.log_floor));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return bad(format!("outlier_prob must lie in [0, 1], got {}", self.outlier_prob));
        }
        if !(self.cv.ridge >= 0.0) {
            return bad(format!("cv ridge must be nonnegative, got {}", self.cv.ridge));
        }
        let members = self.members();
        if self.method == Method::Lcb && members.contains(&SurrogateKind::Tpe) {
            return bad("lcb needs GP members only".into());
        }
        if self.method != Method::SobolRandom {
            EnsembleState::<f64>::uniform(members.len(), &self.ensemble)?;
        }
        Ok(objective)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 for initial-design points, then the BO iteration.
    pub t: usize,
    pub lambda: Vec<f64>,
    /// Value seen by the optimizer (possibly corrupted).
    pub y_raw: f64,
    pub y_clean: f64,
    pub corrupted: bool,
    /// Best observed value so far, including this point.
    pub f_star: f64,
    /// Best-so-far regret on clean values.
    pub regret: f64,
    pub weights: Vec<f64>,
    pub acq_value: Option<f64>,
    /// Surrogate failure; the point came from the Sobol fallback.
    pub fallback: bool,
    pub step_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPoint {
    pub lambda: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: RunConfig,
    pub iterations: Vec<IterationRecord>,
    pub best: BestPoint,
}

impl RunTrace {
    /// Regret after the initial design and after each BO iteration.
    pub fn regret_by_iteration(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for rec in &self.iterations {
            if rec.t == out.len() {
                out.push(rec.regret);
            } else if let Some(last) = out.last_mut() {
                *last = rec.regret;
            }
        }
        out
    }

    pub fn final_regret(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.regret)
    }
}

/// Running minimum of `values` minus `f_opt`.
pub fn best_so_far(values: &[f64], f_opt: f64) -> Vec<f64> {
    let mut best = f64::INFINITY;
    values
        .iter()
        .map(|&v| {
            best = best.min(v);
            best - f_opt
        })
        .collect()
}

/// Maximizes `score` by ranking `raw_samples` scrambled Sobol candidates and
/// polishing the best `restarts` of them with coordinate pattern search in
/// the unit cube. Returns the best point and its score.
pub fn optimize_acquisition(mut score: impl FnMut(&[f64]) -> f64, dim: usize, cfg: &OptimizerConfig, rng: &mut RngState) -> Result<(Vec<f64>, f64)> {
    if cfg.restarts == 0 || cfg.raw_samples < cfg.restarts {
        return Err(Error::InvalidConfig(format!("optimizer needs raw_samples >= restarts >= 1 (got {} and {})", cfg.raw_samples, cfg.restarts)));
    }
    let clean = |v: f64| if v.is_finite() { v } else { f64::NEG_INFINITY };
    let mut sobol = Sobol::scrambled(dim, rng.next_seed())?;
    let mut candidates: Vec<(Vec<f64>, f64)> = (0..cfg.raw_samples)
        .map(|_| {
            let x: Vec<f64> = sobol.next_point();
            let v = clean(score(&x));
            (x, v)
        })
        .collect();
    // Stable sort keeps Sobol order among ties.
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let search = PatternSearch { initial_step: 0.1, min_step: 1e-3, budget: cfg.local_budget };
    let (lower, upper) = (vec![0.0; dim], vec![1.0; dim]);
    let mut best = candidates[0].clone();
    for (start, value) in candidates.into_iter().take(cfg.restarts) {
        let r = pattern_search(&mut score, start, Some(value), &lower, &upper, &[], &search);
        if r.value > best.1 {
            best = (r.point, r.value);
        }
    }
    Ok(best)
}

enum Fitted {
    Gp { fit: GpFit<f64>, posterior: ParamPosterior<f64>, y_scale: (f64, f64) },
    Tpe { full: TpeModel<f64>, bootstrap: BootstrapEnsemble<f64> },
}

impl Fitted {
    /// Predictive log score of an observation, used for the weight update.
    fn log_score(&self, x: &[f64], y: f64) -> f64 {
        match self {
            Fitted::Gp { fit, y_scale: (mean, scale), .. } => predictive_log_score(fit, x, (y - mean) / scale),
            Fitted::Tpe { full, .. } => full.log_density(x),
        }
    }
}

enum MemberAcq<'a> {
    Ei { set: GpSampleSet<'a, f64>, orth: Orthogonalizer<f64> },
    Lcb(&'a GpFit<f64>),
    Tpe { bootstrap: &'a BootstrapEnsemble<f64>, orth: Orthogonalizer<f64> },
}

impl MemberAcq<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            MemberAcq::Ei { set, orth } => orth.value(&set.ei_values(x)),
            MemberAcq::Lcb(fit) => {
                let (mean, var) = fit.predict(x);
                -(mean - LCB_WIDTH * var.sqrt())
            }
            MemberAcq::Tpe { bootstrap, orth } => orth.value(&bootstrap.acquisition_values(x)),
        }
    }
}

fn initial_design(dim: usize, seed: u64) -> Result<Sobol> {
    let mut sobol = Sobol::scrambled(dim, RngState::new(seed).derive(0).next_seed())?;
    sobol.skip(1);
    Ok(sobol)
}

/// Stateful loop; `run_bo` drives it to completion.
pub struct BoLoop {
    cfg: RunConfig,
    objective: Objective,
    members: Vec<SurrogateKind>,
    root: RngState,
    sobol: Sobol,
    x: Vec<Vec<f64>>,
    y_obs: Vec<f64>,
    y_clean: Vec<f64>,
    records: Vec<IterationRecord>,
    ensemble: Option<EnsembleState<f64>>,
    pending_scores: Option<Vec<f64>>,
    warm_starts: Vec<Option<Vec<f64>>>,
    t: usize,
}

impl BoLoop {
    /// Validates the config and evaluates the initial design: a Sobol
    /// sequence scrambled with the run seed, first point skipped.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let objective = cfg.validate()?;
        let members = cfg.members();
        let sobol = initial_design(objective.dim, cfg.seed)?;
        let ensemble = if members.is_empty() { None } else { Some(EnsembleState::uniform(members.len(), &cfg.ensemble)?) };
        let mut this = Self {
            root: RngState::new(cfg.seed),
            warm_starts: vec![None; members.len()],
            members,
            objective,
            sobol,
            x: Vec::new(),
            y_obs: Vec::new(),
            y_clean: Vec::new(),
            records: Vec::new(),
            ensemble,
            pending_scores: None,
            t: 0,
            cfg,
        };
        for _ in 0..this.cfg.n_init {
            let x = this.sobol.next_point();
            let y = this.objective.evaluate(&x);
            this.push(x, y, y, false, None, false, None, None);
        }
        Ok(this)
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn history_len(&self) -> usize {
        self.x.len()
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.budget
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, x: Vec<f64>, y_obs: f64, y_clean: f64, corrupted: bool, acq: Option<f64>, fallback: bool, step_ms: Option<f64>, model_ms: Option<Vec<f64>>) {
        let f_star = self.y_obs.iter().copied().fold(y_obs, f64::min);
        let best_clean = self.y_clean.iter().copied().fold(y_clean, f64::min);
        self.records.push(IterationRecord {
            t: self.t,
            lambda: x.clone(),
            y_raw: y_obs,
            y_clean,
            corrupted,
            f_star,
            regret: best_clean - self.objective.f_opt,
            weights: self.ensemble.as_ref().map_or_else(Vec::new, |e| e.weights().to_vec()),
            acq_value: acq,
            fallback,
            step_ms,
            model_ms,
        });
        self.x.push(x);
        self.y_obs.push(y_obs);
        self.y_clean.push(y_clean);
    }

    fn fit_members(&mut self, data: &ObservationSet<f64>, rng: &RngState, timings: &mut Vec<f64>) -> Result<Vec<Fitted>> {
        let mut fitted = Vec::with_capacity(self.members.len());
        let scale = data.standardization();
        for (m, kind) in self.members.clone().into_iter().enumerate() {
            let start = Instant::now();
            let mut member_rng = rng.derive(m as u64);
            let model = match kind {
                SurrogateKind::Gp(family) => {
                    let spec = KernelSpec::new(family, data.dim());
                    let prior = HyperPrior::default_for(&spec);
                    let fit = fit_map(data, spec, &prior, &self.cfg.gp, self.warm_starts[m].as_deref(), &mut member_rng)?;
                    self.warm_starts[m] = Some(fit.theta_hat().to_vec());
                    let posterior = laplace_posterior(&fit, &self.cfg.gp);
                    Fitted::Gp { fit, posterior, y_scale: (scale.mean, scale.scale) }
                }
                SurrogateKind::Tpe => {
                    let full = tpe_fit(data, self.cfg.tpe_quantile)?;
                    let bootstrap = tpe_bootstrap(data, self.cfg.mc_samples, self.cfg.tpe_quantile, &mut member_rng)?;
                    Fitted::Tpe { full, bootstrap }
                }
            };
            timings.push(start.elapsed().as_secs_f64() * 1e3);
            fitted.push(model);
        }
        Ok(fitted)
    }

    fn member_acquisitions<'a>(&self, fitted: &'a [Fitted], f_star: f64, rng: &RngState) -> Result<Vec<MemberAcq<'a>>> {
        let cv = if self.cfg.method.orthogonalized() { self.cfg.cv } else { CvConfig::disabled() };
        fitted
            .iter()
            .enumerate()
            .map(|(m, model)| {
                let mut member_rng = rng.derive(m as u64);
                Ok(match model {
                    Fitted::Gp { fit, .. } if self.cfg.method == Method::Lcb => MemberAcq::Lcb(fit),
                    Fitted::Gp { fit, posterior, .. } => {
                        let set = GpSampleSet::draw(fit, posterior, self.cfg.mc_samples, f_star, &mut member_rng)?;
                        let orth = set.orthogonalizer(&cv);
                        MemberAcq::Ei { set, orth }
                    }
                    Fitted::Tpe { bootstrap, .. } => MemberAcq::Tpe { bootstrap, orth: bootstrap.orthogonalizer(&cv) },
                })
            })
            .collect()
    }

    /// Proposes a point from the surrogates; errors are surrogate failures.
    fn propose(&mut self, iter_rng: &RngState, timings: &mut Vec<f64>) -> Result<(Vec<f64>, f64, Vec<Fitted>)> {
        let data = ObservationSet::new(self.x.clone(), self.y_obs.clone())?;
        let fitted = self.fit_members(&data, &iter_rng.derive(1), timings)?;
        let acqs = self.member_acquisitions(&fitted, data.f_star_std(), &iter_rng.derive(2))?;
        let weights = self.ensemble.as_ref().map_or_else(Vec::new, |e| e.weights().to_vec());
        let floor = self.cfg.log_floor;
        let lcb = self.cfg.method == Method::Lcb;
        let mut values = vec![0.0; acqs.len()];
        let score = |x: &[f64]| {
            for (v, a) in values.iter_mut().zip(&acqs) {
                *v = a.value(x);
            }
            let mixed = aggregate(&values, &weights).unwrap_or(f64::NAN);
            if lcb {
                mixed
            } else {
                outer_log(mixed, floor)
            }
        };
        let (x, value) = optimize_acquisition(score, self.objective.dim, &self.cfg.optimizer, &mut iter_rng.derive(3))?;
        if !value.is_finite() {
            return Err(Error::SurrogateFailure("acquisition is non-finite everywhere".into()));
        }
        drop(acqs);
        Ok((x, value, fitted))
    }

    /// Runs one BO iteration and returns its record.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        let start = Instant::now();
        self.t += 1;
        let iter_rng = self.root.derive(self.t as u64);
        if let (Some(ensemble), Some(scores)) = (self.ensemble.as_mut(), self.pending_scores.take()) {
            ensemble.update(&scores)?;
        }
        let mut timings = Vec::new();
        let (x, acq, fitted, fallback) = if self.cfg.method == Method::SobolRandom {
            (self.sobol.next_point(), None, Vec::new(), false)
        } else {
            match self.propose(&iter_rng, &mut timings) {
                Ok((x, value, fitted)) => (x, Some(value), fitted, false),
                Err(e) => {
                    log::warn!("iteration {}: surrogate failure ({e}); using a Sobol fallback point", self.t);
                    let mut fallback = Sobol::scrambled(self.objective.dim, iter_rng.derive(5).next_seed())?;
                    (fallback.next_point(), None, Vec::new(), true)
                }
            }
        };
        let y_clean = self.objective.evaluate(&x);
        let (y_obs, corrupted) = inject_outliers(y_clean, self.cfg.outlier_prob, &mut iter_rng.derive(4), &self.y_clean);
        self.pending_scores = if fitted.is_empty() { None } else { Some(fitted.iter().map(|f| f.log_score(&x, y_obs)).collect()) };
        let (step_ms, model_ms) = if self.cfg.record_timing { (Some(start.elapsed().as_secs_f64() * 1e3), Some(timings)) } else { (None, None) };
        self.push(x, y_obs, y_clean, corrupted, acq, fallback, step_ms, model_ms);
        Ok(self.records.last().expect("a record was just pushed"))
    }

    pub fn into_trace(self) -> RunTrace {
        let best = self
            .x
            .iter()
            .zip(&self.y_obs)
            .fold(None::<BestPoint>, |best, (x, &y)| match best {
                Some(b) if b.y <= y => Some(b),
                _ => Some(BestPoint { lambda: x.clone(), y }),
            })
            .expect("the initial design is never empty");
        RunTrace { config: self.cfg, iterations: self.records, best }
    }
}

pub fn run_bo(cfg: &RunConfig) -> Result<RunTrace> {
    let mut run = BoLoop::new(cfg.clone())?;
    while !run.is_done() {
        run.step()?;
    }
    Ok(run.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(method: Method, seed: u64) -> RunConfig {
        RunConfig {
            objective: "quadratic:1".into(),
            method,
            budget: 6,
            n_init: 4,
            mc_samples: 16,
            optimizer: OptimizerConfig { raw_samples: 32, restarts: 2, local_budget: 20 },
            seed,
            ..RunConfig::default()
        }
    }

    #[test]
    fn optimizer_finds_quadratic_centre() {
        let score = |x: &[f64]| -((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2));
        let cfg = OptimizerConfig { raw_samples: 64, restarts: 4, local_budget: 200 };
        let (x, _) = optimize_acquisition(score, 2, &cfg, &mut RngState::new(1)).unwrap();
        assert!((x[0] - 0.5).abs() < 5e-3 && (x[1] - 0.5).abs() < 5e-3, "{x:?}");
    }

    #[test]
    fn optimizer_degenerate_budget_returns_candidate() {
        let cfg = OptimizerConfig { raw_samples: 1, restarts: 1, local_budget: 0 };
        let mut rng = RngState::new(9);
        let (x, v) = optimize_acquisition(|x: &[f64]| x[0], 3, &cfg, &mut rng.clone()).unwrap();
        let want: Vec<f64> = Sobol::scrambled(3, rng.next_seed()).unwrap().next_point();
        assert_eq!((x.clone(), v), (want.clone(), want[0]));
        let again = optimize_acquisition(|x: &[f64]| x[0], 3, &cfg, &mut RngState::new(9)).unwrap();
        assert_eq!(again.0, x);
        let bad = OptimizerConfig { raw_samples: 2, restarts: 3, local_budget: 0 };
        assert!(optimize_acquisition(|x: &[f64]| x[0], 3, &bad, &mut rng).is_err());
    }

    #[test]
    fn best_so_far_examples() {
        assert_eq!(best_so_far(&[3.0, 1.0, 2.0], 0.0), vec![3.0, 1.0, 1.0]);
        assert_eq!(best_so_far(&[5.0, 4.0, 2.0], 2.0), vec![3.0, 2.0, 0.0]);
    }

    #[test]
    fn zero_budget_keeps_initial_design() {
        let cfg = RunConfig { budget: 0, ..quick(Method::OrthEi, 1) };
        let trace = run_bo(&cfg).unwrap();
        assert_eq!(trace.iterations.len(), 4);
        assert!(trace.iterations.iter().all(|r| r.t == 0));
        let min = trace.iterations.iter().map(|r| r.y_raw).fold(f64::INFINITY, f64::min);
        assert_eq!(trace.best.y, min);
        assert_eq!(trace.regret_by_iteration().len(), 1);
    }

    #[test]
    fn initial_design_is_seeded_sobol() {
        let trace = run_bo(&RunConfig { budget: 0, ..quick(Method::McEi, 1) }).unwrap();
        let mut sobol = Sobol::scrambled(1, RngState::new(1).derive(0).next_seed()).unwrap();
        sobol.skip(1);
        let want: Vec<Vec<f64>> = (0..4).map(|_| sobol.next_point()).collect();
        let got: Vec<Vec<f64>> = trace.iterations.iter().map(|r| r.lambda.clone()).collect();
        assert_eq!(got, want);
        let other = run_bo(&RunConfig { budget: 0, ..quick(Method::McEi, 2) }).unwrap();
        assert_ne!(other.iterations[0].lambda, got[0]);
    }

    #[test]
    fn runs_are_deterministic() {
        for method in Method::ALL {
            let cfg = quick(method, 3);
            let a = serde_json::to_string(&run_bo(&cfg).unwrap()).unwrap();
            let b = serde_json::to_string(&run_bo(&cfg).unwrap()).unwrap();
            assert_eq!(a, b, "{method}");
        }
    }

    #[test]
    fn disabled_overlay_replays_mc() {
        let mc = run_bo(&quick(Method::McEi, 5)).unwrap();
        let off = run_bo(&RunConfig { cv: CvConfig::disabled(), ..quick(Method::OrthEi, 5) }).unwrap();
        assert_eq!(mc.iterations, off.iterations);
        assert_eq!(mc.best, off.best);
    }

    #[test]
    fn methods_share_initial_design() {
        let mc = run_bo(&quick(Method::McEi, 2)).unwrap();
        let orth = run_bo(&quick(Method::OrthEi, 2)).unwrap();
        assert_eq!(mc.iterations[..4], orth.iterations[..4]);
    }

    #[test]
    fn regret_is_monotone_and_nonnegative() {
        let trace = run_bo(&RunConfig { outlier_prob: 0.3, ..quick(Method::OrthEi, 4) }).unwrap();
        let regrets: Vec<f64> = trace.iterations.iter().map(|r| r.regret).collect();
        assert!(regrets.windows(2).all(|w| w[1] <= w[0]));
        assert!(regrets.iter().all(|&r| r >= 0.0));
        let by_iter = trace.regret_by_iteration();
        assert_eq!(by_iter.len(), 7);
        assert_eq!(*by_iter.last().unwrap(), trace.final_regret());
    }

    #[test]
    fn ensemble_weights_move() {
        let cfg = RunConfig {
            surrogates: vec![SurrogateKind::Gp(KernelFamily::Matern52Ard), SurrogateKind::Gp(KernelFamily::Linear), SurrogateKind::Tpe],
            objective: "quadratic:2".into(),
            n_init: 8,
            ..quick(Method::OrthEi, 6)
        };
        let trace = run_bo(&cfg).unwrap();
        let last = trace.iterations.last().unwrap();
        assert_eq!(last.weights.len(), 3);
        assert!((last.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_ne!(last.weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(run_bo(&RunConfig { objective: "rosenbrock:2".into(), ..quick(Method::McEi, 1) }).is_err());
        assert!(run_bo(&RunConfig { n_init: 0, ..quick(Method::McEi, 1) }).is_err());
        assert!(run_bo(&RunConfig { surrogates: vec![SurrogateKind::Tpe], ..quick(Method::Lcb, 1) }).is_err());
        assert!("gp:nope".parse::<SurrogateKind>().is_err());
        assert_eq!("gp:rbf-iso".parse::<SurrogateKind>().unwrap(), SurrogateKind::Gp(KernelFamily::RbfIso));
    }

    #[test]
    fn timing_is_opt_in() {
        let plain = run_bo(&quick(Method::OrthEi, 1)).unwrap();
        assert!(plain.iterations.iter().all(|r| r.step_ms.is_none() && r.model_ms.is_none()));
        let timed = run_bo(&RunConfig { record_timing: true, ..quick(Method::OrthEi, 1) }).unwrap();
        assert!(timed.iterations.iter().filter(|r| r.t > 0).all(|r| r.step_ms.is_some()));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig { surrogates: vec![SurrogateKind::Tpe, SurrogateKind::Gp(KernelFamily::Linear)], ..RunConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"gp:linear\"") && text.contains("\"orth-ei\""));
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
