//! Expected improvement: closed form, plain Monte Carlo marginalization over
//! hyperparameter draws, and the score-orthogonalized estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GpCache, GpFit, ParamPosterior};
use crate::math::linalg::{cholesky, dot, Cholesky, JitterPolicy, Matrix};
use crate::math::normal::standardized_ei;
use crate::math::rng::RngState;
use crate::scalar::{compensated_sum, sample_variance, shifted_mean, Scalar};

pub const DEFAULT_LOG_FLOOR: f64 = 1e-25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub enabled: bool,
    /// Tikhonov term relative to the mean control-variate variance.
    pub ridge: f64,
    /// Estimate the coefficient on one half of the draws and apply it to
    /// the other.
    pub cross_fit: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { enabled: true, ridge: 1e-8, cross_fit: false }
    }
}

impl CvConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionEstimate<T> {
    pub value: T,
    pub per_sample_h: Vec<T>,
    pub per_sample_cv: Vec<Vec<T>>,
    pub gamma: Vec<T>,
    /// `h_s - γᵀ c_s` per draw; under cross-fitting each draw uses the
    /// coefficient from the opposite half.
    pub adjusted: Vec<T>,
    pub std_error: T,
    pub samples: usize,
}

impl<T: Scalar> AcquisitionEstimate<T> {
    fn from_adjusted(h: Vec<T>, cv: Vec<Vec<T>>, gamma: Vec<T>, adjusted: Vec<T>) -> Self {
        let samples = h.len();
        let value = shifted_mean(&adjusted);
        let std_error = if samples > 0 { (sample_variance(&adjusted) / T::from_count(samples)).sqrt() } else { T::zero() };
        Self { value, per_sample_h: h, per_sample_cv: cv, gamma, adjusted, std_error, samples }
    }

    /// Sample variance of the raw draws `h_s`.
    pub fn raw_variance(&self) -> T {
        sample_variance(&self.per_sample_h)
    }

    /// Sample variance of the adjusted draws.
    pub fn adjusted_variance(&self) -> T {
        sample_variance(&self.adjusted)
    }
}

/// `E[(f* - f)₊]` for `f ~ N(mean, sd²)`.
pub fn ei_closed_form<T: Scalar>(mean: T, sd: T, f_star: T) -> T {
    let gap = f_star - mean;
    if sd > T::zero() {
        sd * standardized_ei(gap / sd)
    } else {
        gap.max(T::zero())
    }
}

/// `ln(max(value, floor))`.
#[inline]
pub fn outer_log<T: Scalar>(value: T, floor: T) -> T {
    value.max(floor).ln()
}

/// Regression of per-draw values on fixed control variates. The centered
/// design and its regularized factorization are computed once and reused for
/// every candidate.
#[derive(Debug, Clone)]
pub struct CvSolver<T> {
    centered: Vec<Vec<T>>,
    mean: Vec<T>,
    chol: Option<Cholesky<T>>,
}

impl<T: Scalar> CvSolver<T> {
    pub fn new(cv: &[Vec<T>], ridge: f64) -> Self {
        let s = cv.len();
        let d = cv.first().map_or(0, Vec::len);
        let mean: Vec<T> = (0..d).map(|j| shifted_mean(&cv.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
        let centered: Vec<Vec<T>> = cv.iter().map(|r| r.iter().zip(&mean).map(|(&v, &m)| v - m).collect()).collect();
        if s < 2 || d == 0 {
            if s < 2 {
                log::debug!("{}", Error::InsufficientSamples { needed: 2, got: s });
            }
            return Self { centered, mean, chol: None };
        }
        if s < d + 2 {
            log::trace!("control-variate regression with {s} draws for {d} coordinates relies on the ridge term");
        }
        let denom = T::from_count(s - 1);
        let mut cov = Matrix::from_fn(d, d, |i, j| {
            if j < i {
                T::zero()
            } else {
                compensated_sum(centered.iter().map(|r| r[i] * r[j])) / denom
            }
        });
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        let trace = cov.trace();
        if !(trace > T::zero()) {
            return Self { centered, mean, chol: None };
        }
        cov.add_diag(T::lit(ridge) * trace / T::from_count(d));
        let chol = match cholesky(&cov, &JitterPolicy::default()) {
            Ok(c) => Some(c),
            Err(e) => {
                log::debug!("control-variate covariance unusable ({e}); coefficient set to zero");
                None
            }
        };
        Self { centered, mean, chol }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn samples(&self) -> usize {
        self.centered.len()
    }

    /// Sample mean of the control variates.
    pub fn cv_mean(&self) -> &[T] {
        &self.mean
    }

    /// Plug-in coefficient for the values `h` (one per draw).
    pub fn gamma(&self, h: &[T]) -> Vec<T> {
        let d = self.dim();
        let Some(chol) = &self.chol else {
            return vec![T::zero(); d];
        };
        let h_mean = shifted_mean(h);
        let denom = T::from_count(h.len() - 1);
        let mut cov = vec![T::zero(); d];
        for (row, &v) in self.centered.iter().zip(h) {
            let w = v - h_mean;
            for (c, &g) in cov.iter_mut().zip(row) {
                *c += g * w;
            }
        }
        cov.iter_mut().for_each(|c| *c = *c / denom);
        chol.solve(&cov)
    }
}

/// Control-variate adjustment strategy, fixed for a set of draws.
#[derive(Debug, Clone)]
pub enum Orthogonalizer<T> {
    Disabled,
    InSample(CvSolver<T>),
    CrossFit { split: usize, first: CvSolver<T>, second: CvSolver<T> },
}

impl<T: Scalar> Orthogonalizer<T> {
    pub fn new(cv: &[Vec<T>], cfg: &CvConfig) -> Self {
        if !cfg.enabled {
            return Self::Disabled;
        }
        if cfg.cross_fit {
            let split = cv.len() / 2;
            return Self::CrossFit {
                split,
                first: CvSolver::new(&cv[..split], cfg.ridge),
                second: CvSolver::new(&cv[split..], cfg.ridge),
            };
        }
        Self::InSample(CvSolver::new(cv, cfg.ridge))
    }

    /// Adjusted draws and the reported coefficient.
    pub fn adjust(&self, h: &[T], cv: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
        let apply = |gamma: &[T], h: &[T], cv: &[Vec<T>]| -> Vec<T> {
            h.iter().zip(cv).map(|(&v, c)| v - dot(gamma, c)).collect()
        };
        match self {
            Self::Disabled => (h.to_vec(), vec![T::zero(); cv.first().map_or(0, Vec::len)]),
            Self::InSample(solver) => {
                let gamma = solver.gamma(h);
                (apply(&gamma, h, cv), gamma)
            }
            Self::CrossFit { split, first, second } => {
                let g_first = first.gamma(&h[..*split]);
                let g_second = second.gamma(&h[*split..]);
                let mut adjusted = apply(&g_second, &h[..*split], &cv[..*split]);
                adjusted.extend(apply(&g_first, &h[*split..], &cv[*split..]));
                let gamma = g_first.iter().zip(&g_second).map(|(&a, &b)| (a + b) * T::lit(0.5)).collect();
                (adjusted, gamma)
            }
        }
    }

    /// Mean of the adjusted draws, without materializing them.
    pub fn value(&self, h: &[T]) -> T {
        match self {
            Self::Disabled => shifted_mean(h),
            Self::InSample(solver) => shifted_mean(h) - dot(&solver.gamma(h), solver.cv_mean()),
            Self::CrossFit { split, first, second } => {
                let (a, b) = h.split_at(*split);
                let ga = first.gamma(a);
                let gb = second.gamma(b);
                let total = T::from_count(h.len());
                let part_a = (shifted_mean(a) - dot(&gb, first.cv_mean())) * T::from_count(a.len());
                let part_b = (shifted_mean(b) - dot(&ga, second.cv_mean())) * T::from_count(b.len());
                (part_a + part_b) / total
            }
        }
    }

    pub fn estimate(&self, h: Vec<T>, cv: Vec<Vec<T>>) -> AcquisitionEstimate<T> {
        let (adjusted, gamma) = self.adjust(&h, &cv);
        AcquisitionEstimate::from_adjusted(h, cv, gamma, adjusted)
    }
}

/// Plug-in coefficient solving `(Σ̂ + ridge·tr(Σ̂)/d·I) γ = Ĉov(c, h)`. With
/// cross-fitting, the average of the two half-sample coefficients.
pub fn gamma_plugin<T: Scalar>(h: &[T], cv: &[Vec<T>], cfg: &CvConfig) -> Result<Vec<T>> {
    if h.len() != cv.len() {
        return Err(Error::LengthMismatch { left: h.len(), right: cv.len() });
    }
    let enabled = CvConfig { enabled: true, ..*cfg };
    Ok(Orthogonalizer::new(cv, &enabled).adjust(h, cv).1)
}

/// Orthogonalized estimate from per-draw values and control variates.
pub fn orthogonalize<T: Scalar>(h: Vec<T>, cv: Vec<Vec<T>>, cfg: &CvConfig) -> Result<AcquisitionEstimate<T>> {
    if h.len() != cv.len() {
        return Err(Error::LengthMismatch { left: h.len(), right: cv.len() });
    }
    Ok(Orthogonalizer::new(&cv, cfg).estimate(h, cv))
}

/// Hyperparameter draws from `q` with their scores and predictive caches,
/// drawn once and shared by every candidate that is scored against them.
#[derive(Debug, Clone)]
pub struct GpSampleSet<'a, T> {
    fit: &'a GpFit<T>,
    thetas: Vec<Vec<T>>,
    scores: Vec<Vec<T>>,
    caches: Vec<GpCache<T>>,
    failures: usize,
    f_star: T,
}

impl<'a, T: Scalar> GpSampleSet<'a, T> {
    /// Draws `samples` hyperparameter vectors. A draw whose covariance
    /// cannot be factorized is evaluated at the MAP instead and counted in
    /// [`failures`](Self::failures). `f_star` is on the standardized scale.
    pub fn draw(fit: &'a GpFit<T>, q: &ParamPosterior<T>, samples: usize, f_star: T, rng: &mut RngState) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let mut thetas = Vec::with_capacity(samples);
        let mut scores = Vec::with_capacity(samples);
        let mut caches = Vec::with_capacity(samples);
        let mut failures = 0;
        for _ in 0..samples {
            let theta = q.sample(rng);
            let cache = if theta.as_slice() == fit.theta_hat() {
                fit.cache().clone()
            } else {
                match fit.cache_at(&theta) {
                    Ok(c) => c,
                    Err(e) => {
                        log::debug!("hyperparameter draw failed ({e}); using the MAP cache");
                        failures += 1;
                        fit.cache().clone()
                    }
                }
            };
            scores.push(q.score(&theta));
            thetas.push(theta);
            caches.push(cache);
        }
        Ok(Self { fit, thetas, scores, caches, failures, f_star })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[Vec<T>] {
        &self.thetas
    }

    pub fn scores(&self) -> &[Vec<T>] {
        &self.scores
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn f_star(&self) -> T {
        self.f_star
    }

    /// Per-draw EI at `x`.
    pub fn ei_values(&self, x: &[T]) -> Vec<T> {
        let train = self.fit.train_x();
        self.caches
            .iter()
            .map(|c| {
                let (mean, var) = c.predict(train, x);
                ei_closed_form(mean, var.sqrt(), self.f_star)
            })
            .collect()
    }

    pub fn orthogonalizer(&self, cfg: &CvConfig) -> Orthogonalizer<T> {
        Orthogonalizer::new(&self.scores, cfg)
    }

    pub fn estimate(&self, x: &[T], cfg: &CvConfig) -> AcquisitionEstimate<T> {
        self.orthogonalizer(cfg).estimate(self.ei_values(x), self.scores.clone())
    }

    /// Common-draw estimate of `EI(x) - EI(x')`, orthogonalizing the
    /// difference directly. Returns the estimate and its variance.
    pub fn diff(&self, x: &[T], x_other: &[T], cfg: &CvConfig) -> (T, T) {
        let h: Vec<T> = self.ei_values(x).into_iter().zip(self.ei_values(x_other)).map(|(a, b)| a - b).collect();
        let est = self.orthogonalizer(cfg).estimate(h, self.scores.clone());
        (est.value, est.std_error * est.std_error)
    }
}

fn check_dim<T: Scalar>(fit: &GpFit<T>, x: &[T]) -> Result<()> {
    if x.len() != fit.spec().dim {
        return Err(Error::DimensionMismatch { expected: fit.spec().dim, got: x.len() });
    }
    Ok(())
}

/// Plain Monte Carlo marginal EI (`γ = 0`).
pub fn ei_mc<T: Scalar>(fit: &GpFit<T>, q: &ParamPosterior<T>, x: &[T], samples: usize, f_star: T, rng: &mut RngState) -> Result<AcquisitionEstimate<T>> {
    check_dim(fit, x)?;
    Ok(GpSampleSet::draw(fit, q, samples, f_star, rng)?.estimate(x, &CvConfig::disabled()))
}

/// Score-orthogonalized marginal EI.
pub fn ei_orth<T: Scalar>(
    fit: &GpFit<T>,
    q: &ParamPosterior<T>,
    x: &[T],
    samples: usize,
    f_star: T,
    cfg: &CvConfig,
    rng: &mut RngState,
) -> Result<AcquisitionEstimate<T>> {
    check_dim(fit, x)?;
    Ok(GpSampleSet::draw(fit, q, samples, f_star, rng)?.estimate(x, cfg))
}

/// Pairwise difference estimate with common draws.
#[allow(clippy::too_many_arguments)]
pub fn diff_estimate<T: Scalar>(
    fit: &GpFit<T>,
    q: &ParamPosterior<T>,
    x: &[T],
    x_other: &[T],
    samples: usize,
    f_star: T,
    cfg: &CvConfig,
    rng: &mut RngState,
) -> Result<(T, T)> {
    check_dim(fit, x)?;
    check_dim(fit, x_other)?;
    Ok(GpSampleSet::draw(fit, q, samples, f_star, rng)?.diff(x, x_other, cfg))
}
