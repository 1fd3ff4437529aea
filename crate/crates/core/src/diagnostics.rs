//! Probe protocols on a frozen surrogate: repeated acquisition rebuilds at
//! fixed probe points, ranking stability, the Cantelli flip bound and a
//! score-tilt sensitivity check.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::acquisition::{outer_log, CvConfig, GpSampleSet, Orthogonalizer, DEFAULT_LOG_FLOOR};
use crate::error::{Error, Result};
use crate::gp::{GpFit, ObservationSet, ParamPosterior};
use crate::math::linalg::dot;
use crate::math::rng::RngState;
use crate::math::sobol::Sobol;
use crate::scalar::{sample_variance, shifted_mean, Scalar};
use crate::tpe::tpe_bootstrap;

pub const DEFAULT_PROBES: usize = 64;
pub const DEFAULT_REPEATS: usize = 16;
pub const DEFAULT_TOP_K: usize = 8;

/// Per-draw acquisition values at a batch of points, with the control
/// variates of the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledValues<T> {
    /// `values[p][s]`: draw `s` at point `p`.
    pub values: Vec<Vec<T>>,
    pub control_variates: Vec<Vec<T>>,
}

/// A frozen surrogate whose acquisition can be rebuilt from fresh draws.
pub trait ProbeState<T: Scalar> {
    fn label(&self) -> String;
    /// Names of the plain and the orthogonalized estimator.
    fn estimator_names(&self) -> [&'static str; 2];
    fn dim(&self) -> usize;
    /// Hash of everything the rebuilds read.
    fn fingerprint(&self) -> u64;
    fn sample_values(&self, points: &[Vec<T>], samples: usize, rng: &mut RngState) -> Result<SampledValues<T>>;
}

fn hash_values<T: Scalar>(hasher: &mut DefaultHasher, values: &[T]) {
    values.len().hash(hasher);
    for v in values {
        v.as_f64().to_bits().hash(hasher);
    }
}

/// GP fit plus hyperparameter posterior; EI on the standardized scale.
#[derive(Debug, Clone, Copy)]
pub struct GpProbeState<'a, T> {
    pub fit: &'a GpFit<T>,
    pub posterior: &'a ParamPosterior<T>,
    pub f_star: T,
}

impl<T: Scalar> ProbeState<T> for GpProbeState<'_, T> {
    fn label(&self) -> String {
        format!("gp:{}", self.fit.spec().family)
    }

    fn estimator_names(&self) -> [&'static str; 2] {
        ["mc-ei", "orth-ei"]
    }

    fn dim(&self) -> usize {
        self.fit.spec().dim
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.label().hash(&mut h);
        hash_values(&mut h, self.fit.theta_hat());
        hash_values(&mut h, &[self.fit.log_joint(), self.f_star]);
        for row in self.fit.train_x() {
            hash_values(&mut h, row);
        }
        hash_values(&mut h, self.fit.train_y());
        hash_values(&mut h, self.posterior.mean());
        hash_values(&mut h, self.posterior.cov().as_slice());
        h.finish()
    }

    fn sample_values(&self, points: &[Vec<T>], samples: usize, rng: &mut RngState) -> Result<SampledValues<T>> {
        let set = GpSampleSet::draw(self.fit, self.posterior, samples, self.f_star, rng)?;
        let values = points.iter().map(|x| set.ei_values(x)).collect();
        Ok(SampledValues { values, control_variates: set.scores().to_vec() })
    }
}

/// Observation history behind a bootstrap TPE ensemble; each rebuild draws a
/// fresh bootstrap.
#[derive(Debug, Clone, Copy)]
pub struct TpeProbeState<'a, T> {
    pub data: &'a ObservationSet<T>,
    pub quantile: f64,
}

impl<T: Scalar> ProbeState<T> for TpeProbeState<'_, T> {
    fn label(&self) -> String {
        format!("tpe:{}", self.quantile)
    }

    fn estimator_names(&self) -> [&'static str; 2] {
        ["tpe-mc", "tpe-orth"]
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.label().hash(&mut h);
        for row in self.data.x() {
            hash_values(&mut h, row);
        }
        hash_values(&mut h, self.data.y_raw());
        h.finish()
    }

    fn sample_values(&self, points: &[Vec<T>], samples: usize, rng: &mut RngState) -> Result<SampledValues<T>> {
        let ens = tpe_bootstrap(self.data, samples, self.quantile, rng)?;
        let values = points.iter().map(|x| ens.acquisition_values(x)).collect();
        Ok(SampledValues { values, control_variates: ens.control_variates().to_vec() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub probes: usize,
    pub repeats: usize,
    pub samples: usize,
    pub seed: u64,
    pub top_k: usize,
    pub cv: CvConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { probes: DEFAULT_PROBES, repeats: DEFAULT_REPEATS, samples: 32, seed: 0, top_k: DEFAULT_TOP_K, cv: CvConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorProbe {
    pub estimator: String,
    /// `values[p][r]`.
    pub values: Vec<Vec<f64>>,
    pub probe_variance: Vec<f64>,
    pub mean_variance: f64,
    /// Variance of `ln(max(value, 1e-25))` across repeats.
    pub log_probe_variance: Vec<f64>,
    pub mean_log_variance: f64,
    /// Per-draw sample variance within a rebuild, averaged over repeats.
    pub within_variance: Vec<f64>,
    pub top1_agreement: f64,
    pub flip_rate: f64,
}

impl EstimatorProbe {
    fn new(estimator: &str, values: Vec<Vec<f64>>, within: Vec<Vec<f64>>, top_k: usize) -> Result<Self> {
        let probe_variance: Vec<f64> = values.iter().map(|v| sample_variance(v)).collect();
        let log_probe_variance: Vec<f64> = values
            .iter()
            .map(|v| sample_variance(&v.iter().map(|&x| outer_log(x, DEFAULT_LOG_FLOOR)).collect::<Vec<_>>()))
            .collect();
        let (top1_agreement, flip_rate) = ranking_stability(&values, top_k)?;
        Ok(Self {
            estimator: estimator.to_string(),
            mean_variance: shifted_mean(&probe_variance),
            mean_log_variance: shifted_mean(&log_probe_variance),
            within_variance: within.iter().map(|w| shifted_mean(w)).collect(),
            values,
            probe_variance,
            log_probe_variance,
            top1_agreement,
            flip_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub surrogate: String,
    pub fingerprint: u64,
    pub config: ProbeConfig,
    pub repeat_seeds: Vec<u64>,
    pub probes: Vec<Vec<f64>>,
    /// Plain average first, then the orthogonalized estimate from the same
    /// draws.
    pub estimators: Vec<EstimatorProbe>,
    /// Probes where the in-sample adjusted variance exceeded the raw one.
    pub within_violations: usize,
}

impl ProbeReport {
    pub fn raw(&self) -> &EstimatorProbe {
        &self.estimators[0]
    }

    pub fn orth(&self) -> &EstimatorProbe {
        &self.estimators[1]
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorProbe> {
        self.estimators.iter().find(|e| e.estimator == name)
    }

    /// `1 - orth/raw` of the mean probe variances.
    pub fn variance_reduction(&self) -> f64 {
        1.0 - self.orth().mean_variance / self.raw().mean_variance
    }
}

/// Fixed probe set drawn from a scrambled Sobol sequence.
pub fn probe_points<T: Scalar>(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    let mut sobol = Sobol::scrambled(dim, seed)?;
    Ok((0..count).map(|_| sobol.next_point()).collect())
}

/// Repeat seeds derived from the report seed.
pub fn repeat_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    let root = RngState::new(seed);
    (0..repeats as u64).map(|r| root.derive(r).next_seed()).collect()
}

/// Rebuilds the acquisition `cfg.repeats` times at Sobol probe points.
pub fn variance_probe<T: Scalar, S: ProbeState<T> + ?Sized>(state: &S, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let probes = probe_points::<T>(state.dim(), cfg.probes, cfg.seed)?;
    variance_probe_at(state, &probes, &repeat_seeds(cfg.seed, cfg.repeats), cfg)
}

/// Probe protocol with explicit probe points and repeat seeds.
pub fn variance_probe_at<T: Scalar, S: ProbeState<T> + ?Sized>(state: &S, probes: &[Vec<T>], seeds: &[u64], cfg: &ProbeConfig) -> Result<ProbeReport> {
    let fingerprint = state.fingerprint();
    let n = probes.len();
    let mut raw = vec![Vec::with_capacity(seeds.len()); n];
    let mut orth = raw.clone();
    let mut raw_within = raw.clone();
    let mut orth_within = raw.clone();
    let mut within_violations = 0;
    let in_sample = cfg.cv.enabled && !cfg.cv.cross_fit;
    for &seed in seeds {
        let mut rng = RngState::new(seed);
        let sampled = state.sample_values(probes, cfg.samples, &mut rng)?;
        let adjuster = Orthogonalizer::new(&sampled.control_variates, &cfg.cv);
        for (p, h) in sampled.values.iter().enumerate() {
            let (adjusted, _) = adjuster.adjust(h, &sampled.control_variates);
            raw[p].push(shifted_mean(h).as_f64());
            orth[p].push(shifted_mean(&adjusted).as_f64());
            let raw_var = sample_variance(h);
            raw_within[p].push(raw_var.as_f64());
            orth_within[p].push(sample_variance(&adjusted).as_f64());
            if in_sample {
                let var = sample_variance(&adjusted);
                if var > raw_var * (T::one() + T::loose_eps()) && var - raw_var > T::loose_eps() * T::loose_eps() {
                    within_violations += 1;
                }
            }
        }
    }
    let [raw_name, orth_name] = state.estimator_names();
    if state.fingerprint() != fingerprint {
        return Err(Error::NumericalFailure("surrogate state changed during the probe protocol".into()));
    }
    Ok(ProbeReport {
        surrogate: state.label(),
        fingerprint,
        config: *cfg,
        repeat_seeds: seeds.to_vec(),
        probes: probes.iter().map(|p| p.iter().map(|v| v.as_f64()).collect()).collect(),
        estimators: vec![
            EstimatorProbe::new(raw_name, raw, raw_within, cfg.top_k)?,
            EstimatorProbe::new(orth_name, orth, orth_within, cfg.top_k)?,
        ],
        within_violations,
    })
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 || i == 0 {
            best = (i, v);
        }
    }
    best.0
}

/// `(top-1 agreement, flip rate)` for a probe × repeat value matrix.
///
/// Agreement is the share of repeats whose argmax equals the modal argmax.
/// The flip rate counts adjacent pairs among the `top_k` probes of the mean
/// ranking whose order is reversed within a repeat.
pub fn ranking_stability(values: &[Vec<f64>], top_k: usize) -> Result<(f64, f64)> {
    let repeats = values.first().map_or(0, Vec::len);
    if repeats < 2 {
        return Err(Error::InsufficientRepeats { needed: 2, got: repeats });
    }
    if let Some(bad) = values.iter().find(|v| v.len() != repeats) {
        return Err(Error::LengthMismatch { left: repeats, right: bad.len() });
    }
    let mut counts = vec![0usize; values.len()];
    for r in 0..repeats {
        counts[argmax(values.iter().map(|v| v[r]))] += 1;
    }
    let modal = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).map_or(0, |(i, _)| i);
    let agreement = counts[modal] as f64 / repeats as f64;

    let means: Vec<f64> = values.iter().map(|v| shifted_mean(v)).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let top = &order[..top_k.min(order.len())];
    if top.len() < 2 {
        return Ok((agreement, 0.0));
    }
    let mut flips = 0usize;
    for r in 0..repeats {
        flips += top.windows(2).filter(|w| values[w[0]][r] < values[w[1]][r]).count();
    }
    Ok((agreement, flips as f64 / ((top.len() - 1) * repeats) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantelliOutcome {
    pub bound: f64,
    pub frequency: f64,
    pub slack: f64,
    pub satisfied: bool,
}

/// Compares the empirical flip frequency `flips / repeats` of a positive gap
/// `delta` against `var / (var + delta²)` plus three binomial standard errors
/// at the bound.
pub fn cantelli_check(delta: f64, variance: f64, flips: usize, repeats: usize) -> Result<CantelliOutcome> {
    if !(delta > 0.0) {
        return Err(Error::NonpositiveGap(delta));
    }
    if !(variance >= 0.0) || repeats == 0 || flips > repeats {
        return Err(Error::InvalidConfig(format!("cantelli check needs var >= 0 and flips <= repeats > 0 (var {variance}, {flips}/{repeats})")));
    }
    let bound = variance / (variance + delta * delta);
    let frequency = flips as f64 / repeats as f64;
    let slack = 3.0 * (bound * (1.0 - bound) / repeats as f64).sqrt();
    Ok(CantelliOutcome { bound, frequency, slack, satisfied: frequency <= bound + slack })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltOutcome {
    pub orth_derivative: f64,
    pub raw_derivative: f64,
    pub orth_std_error: f64,
    pub raw_std_error: f64,
}

/// Central finite-difference derivative at `ε = 0` of the self-normalized
/// means of `h` (raw) and of the adjusted draws (orth) under weights
/// `∝ exp(±ε bᵀc_s)`. The coefficient is fitted once on the untilted draws.
pub fn tilt_derivatives<T: Scalar>(h: &[T], cv: &[Vec<T>], direction: &[T], eps: f64, cfg: &CvConfig) -> Result<TiltOutcome> {
    if !(eps > 0.0 && eps <= 0.05) {
        return Err(Error::InvalidConfig(format!("tilt step must lie in (0, 0.05], got {eps}")));
    }
    if h.len() != cv.len() {
        return Err(Error::LengthMismatch { left: h.len(), right: cv.len() });
    }
    if h.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: h.len() });
    }
    if let Some(c) = cv.iter().find(|c| c.len() != direction.len()) {
        return Err(Error::DimensionMismatch { expected: direction.len(), got: c.len() });
    }
    let (adjusted, _) = Orthogonalizer::new(cv, cfg).adjust(h, cv);
    let tilt: Vec<f64> = cv.iter().map(|c| dot(direction, c).as_f64()).collect();
    let h64: Vec<f64> = h.iter().map(|v| v.as_f64()).collect();
    let adj64: Vec<f64> = adjusted.iter().map(|v| v.as_f64()).collect();

    let weighted = |values: &[f64], sign: f64| -> f64 {
        let logits: Vec<f64> = tilt.iter().map(|&u| sign * eps * u).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|&l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        // Centre before weighting so the difference does not cancel
        // against a large common level.
        let centre = shifted_mean(values);
        values.iter().zip(&w).map(|(&v, &wi)| (v - centre) * wi).sum::<f64>() / total
    };
    let derivative = |values: &[f64]| (weighted(values, 1.0) - weighted(values, -1.0)) / (2.0 * eps);
    // First-order derivative is Cov(values, bᵀc); its standard error comes
    // from the spread of the centered products.
    let std_error = |values: &[f64]| {
        let vm = shifted_mean(values);
        let um = shifted_mean(&tilt);
        let products: Vec<f64> = values.iter().zip(&tilt).map(|(&v, &u)| (v - vm) * (u - um)).collect();
        (sample_variance(&products) / products.len() as f64).sqrt()
    };
    Ok(TiltOutcome {
        orth_derivative: derivative(&adj64),
        raw_derivative: derivative(&h64),
        orth_std_error: std_error(&adj64),
        raw_std_error: std_error(&h64),
    })
}

/// Tilt sensitivity of the acquisition at `x` on one fresh set of draws.
pub fn tilt_check<T: Scalar, S: ProbeState<T> + ?Sized>(
    state: &S,
    x: &[T],
    direction: &[T],
    eps: f64,
    samples: usize,
    cfg: &CvConfig,
    rng: &mut RngState,
) -> Result<TiltOutcome> {
    let sampled = state.sample_values(&[x.to_vec()], samples, rng)?;
    tilt_derivatives(&sampled.values[0], &sampled.control_variates, direction, eps, cfg)
}
