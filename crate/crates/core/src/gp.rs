//! Gaussian-process surrogate: evidence, MAP fitting, Laplace posterior over
//! log-hyperparameters, predictions and the posterior score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelParams, KernelSpec};
use crate::math::linalg::{cholesky, dot, Cholesky, JitterPolicy, Matrix};
use crate::math::normal::gaussian_log_density;
use crate::math::rng::{mvn_sample, RngState};
use crate::math::search::{pattern_search, PatternSearch};
use crate::scalar::{sample_variance, shifted_mean, Scalar};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
const MIN_PRED_VAR: f64 = 1e-12;

/// Affine map between raw responses and the zero-mean, unit-variance scale
/// the GP is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization<T> {
    pub mean: T,
    pub scale: T,
}

impl<T: Scalar> Standardization<T> {
    pub fn from_values(y: &[T]) -> Self {
        let mean = shifted_mean(y);
        let sd = sample_variance(y).sqrt();
        let tiny = T::epsilon() * T::lit(64.0) * mean.abs().max(T::one());
        let scale = if y.len() < 2 || !(sd > tiny) { T::one() } else { sd };
        Self { mean, scale }
    }

    #[inline]
    pub fn standardize(&self, v: T) -> T {
        (v - self.mean) / self.scale
    }

    #[inline]
    pub fn destandardize(&self, v: T) -> T {
        v * self.scale + self.mean
    }
}

/// Observed history: unit-cube configurations with raw responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T> {
    x: Vec<Vec<T>>,
    y_raw: Vec<T>,
    y: Vec<T>,
    standardization: Standardization<T>,
}

impl<T: Scalar> ObservationSet<T> {
    pub fn new(x: Vec<Vec<T>>, y_raw: Vec<T>) -> Result<Self> {
        if x.len() != y_raw.len() {
            return Err(Error::LengthMismatch { left: x.len(), right: y_raw.len() });
        }
        if x.is_empty() {
            return Err(Error::InsufficientData("an observation set needs at least one point".into()));
        }
        let d = x[0].len();
        for p in &x {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if p.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
                return Err(Error::InvalidConfig("configuration outside the unit cube".into()));
            }
        }
        if y_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InsufficientData("non-finite response".into()));
        }
        let standardization = Standardization::from_values(&y_raw);
        let y = y_raw.iter().map(|&v| standardization.standardize(v)).collect();
        Ok(Self { x, y_raw, y, standardization })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn x(&self) -> &[Vec<T>] {
        &self.x
    }

    pub fn y_raw(&self) -> &[T] {
        &self.y_raw
    }

    /// Standardized responses.
    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn standardization(&self) -> Standardization<T> {
        self.standardization
    }

    /// Best (lowest) raw response.
    pub fn f_star(&self) -> T {
        self.y_raw.iter().copied().fold(T::infinity(), T::min)
    }

    /// Best response on the standardized scale.
    pub fn f_star_std(&self) -> T {
        self.standardization.standardize(self.f_star())
    }
}

/// Independent normal priors on the log-hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPrior<T> {
    pub mean: Vec<T>,
    pub sd: Vec<T>,
}

impl<T: Scalar> HyperPrior<T> {
    pub fn default_for(spec: &KernelSpec) -> Self {
        let mut mean = vec![T::lit(0.3_f64.ln()); spec.n_lengthscales()];
        mean.push(T::zero());
        mean.push(T::lit(0.1_f64.ln()));
        Self { sd: vec![T::one(); mean.len()], mean }
    }

    pub fn log_density(&self, theta: &[T]) -> T {
        theta
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(&t, (&m, &s))| gaussian_log_density(t, m, s * s))
            .sum()
    }
}

/// Factorization of `K + σ_n² I` and the weights `α = (K + σ_n² I)⁻¹ y` for a
/// single hyperparameter vector.
#[derive(Debug, Clone)]
pub struct GpCache<T> {
    params: KernelParams<T>,
    chol: Cholesky<T>,
    alpha: Vec<T>,
}

impl<T: Scalar> GpCache<T> {
    pub fn build(spec: &KernelSpec, theta: &[T], x: &[Vec<T>], y: &[T], jitter: &JitterPolicy) -> Result<Self> {
        let params = spec.resolve(theta)?;
        let mut k = params.gram(x);
        k.add_diag(params.noise_var);
        let chol = cholesky(&k, jitter).map_err(|e| Error::NumericalFailure(e.to_string()))?;
        let alpha = chol.solve(y);
        Ok(Self { params, chol, alpha })
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn noise_var(&self) -> T {
        self.params.noise_var
    }

    /// `-½ yᵀα - ½ log|K_y| - (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self, y: &[T]) -> T {
        let n = T::from_count(y.len());
        -T::lit(0.5) * dot(y, &self.alpha) - T::lit(0.5) * self.chol.log_det() - T::lit(0.5 * LOG_2PI) * n
    }

    /// Latent predictive mean and variance at `x` (zero prior mean).
    pub fn predict(&self, train: &[Vec<T>], x: &[T]) -> (T, T) {
        let k = self.params.cross(train, x);
        self.predict_from_cross(&k, self.params.diag_value(x))
    }

    #[inline]
    pub fn predict_from_cross(&self, k: &[T], prior_var: T) -> (T, T) {
        let mean = dot(k, &self.alpha);
        let v = self.chol.solve_lower(k);
        let var = (prior_var - dot(&v, &v)).max(T::lit(MIN_PRED_VAR));
        (mean, var)
    }
}

/// Evidence of standardized `y` under `theta`, zero prior mean.
pub fn log_marginal_likelihood_raw<T: Scalar>(spec: &KernelSpec, theta: &[T], x: &[Vec<T>], y: &[T]) -> Result<T> {
    Ok(GpCache::build(spec, theta, x, y, &JitterPolicy::default())?.log_marginal_likelihood(y))
}

pub fn log_marginal_likelihood<T: Scalar>(data: &ObservationSet<T>, spec: &KernelSpec, theta: &[T]) -> Result<T> {
    log_marginal_likelihood_raw(spec, theta, data.x(), data.y())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpFitConfig {
    pub restarts: usize,
    pub budget: usize,
    /// Pins `log σ_n` instead of fitting it.
    pub fixed_log_noise: Option<f64>,
    pub hessian_step: f64,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self { restarts: 4, budget: 200, fixed_log_noise: None, hessian_step: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct GpFit<T> {
    spec: KernelSpec,
    theta_hat: Vec<T>,
    log_joint: T,
    cache: GpCache<T>,
    x: Vec<Vec<T>>,
    y: Vec<T>,
    frozen: Vec<bool>,
    prior: HyperPrior<T>,
}

impl<T: Scalar> GpFit<T> {
    /// Builds a fit at a given `theta` without optimizing.
    pub fn at(data: &ObservationSet<T>, spec: KernelSpec, theta: Vec<T>) -> Result<Self> {
        let prior = HyperPrior::default_for(&spec);
        let cache = GpCache::build(&spec, &theta, data.x(), data.y(), &JitterPolicy::default())?;
        let log_joint = cache.log_marginal_likelihood(data.y()) + prior.log_density(&theta);
        Ok(Self {
            spec,
            frozen: vec![false; theta.len()],
            theta_hat: theta,
            log_joint,
            cache,
            x: data.x().to_vec(),
            y: data.y().to_vec(),
            prior,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn theta_hat(&self) -> &[T] {
        &self.theta_hat
    }

    pub fn log_joint(&self) -> T {
        self.log_joint
    }

    pub fn cache(&self) -> &GpCache<T> {
        &self.cache
    }

    pub fn train_x(&self) -> &[Vec<T>] {
        &self.x
    }

    pub fn train_y(&self) -> &[T] {
        &self.y
    }

    /// Coordinates held fixed during fitting (zero posterior variance).
    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    /// Log marginal likelihood plus log prior at `theta`; `-inf` on failure.
    pub fn log_joint_at(&self, theta: &[T]) -> T {
        log_joint(&self.spec, &self.prior, &self.x, &self.y, theta)
    }

    /// Cache rebuilt for another hyperparameter vector on the same data.
    pub fn cache_at(&self, theta: &[T]) -> Result<GpCache<T>> {
        GpCache::build(&self.spec, theta, &self.x, &self.y, &JitterPolicy::default())
    }

    /// Predictive mean and variance at `x` under the MAP hyperparameters.
    pub fn predict(&self, x: &[T]) -> (T, T) {
        self.cache.predict(&self.x, x)
    }

    pub fn noise_var(&self) -> T {
        self.cache.noise_var()
    }
}

fn log_joint<T: Scalar>(spec: &KernelSpec, prior: &HyperPrior<T>, x: &[Vec<T>], y: &[T], theta: &[T]) -> T {
    match log_marginal_likelihood_raw(spec, theta, x, y) {
        Ok(v) if v.is_finite() => v + prior.log_density(theta),
        _ => T::neg_infinity(),
    }
}

/// Predictive mean and variance at `x` for hyperparameters `theta`.
pub fn predict<T: Scalar>(fit: &GpFit<T>, theta: &[T], x: &[T]) -> Result<(T, T)> {
    if x.len() != fit.spec.dim {
        return Err(Error::DimensionMismatch { expected: fit.spec.dim, got: x.len() });
    }
    Ok(fit.cache_at(theta)?.predict(&fit.x, x))
}

/// MAP estimate of the log-hyperparameters by multi-start pattern search.
/// Restart 0 starts at the prior mean, restart 1 at `warm_start` when given,
/// the rest at prior draws.
pub fn fit_map<T: Scalar>(
    data: &ObservationSet<T>,
    spec: KernelSpec,
    prior: &HyperPrior<T>,
    cfg: &GpFitConfig,
    warm_start: Option<&[T]>,
    rng: &mut RngState,
) -> Result<GpFit<T>> {
    if spec.dim != data.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: data.dim() });
    }
    let p = spec.theta_len();
    let mut frozen = vec![false; p];
    let mut centre = prior.mean.clone();
    if let Some(noise) = cfg.fixed_log_noise {
        frozen[spec.noise_index()] = true;
        centre[spec.noise_index()] = T::lit(noise);
    }
    let six = T::lit(6.0);
    let lower: Vec<T> = (0..p).map(|i| if frozen[i] { centre[i] } else { prior.mean[i] - six * prior.sd[i] }).collect();
    let upper: Vec<T> = (0..p).map(|i| if frozen[i] { centre[i] } else { prior.mean[i] + six * prior.sd[i] }).collect();

    let mut starts = vec![centre.clone()];
    if let Some(w) = warm_start.filter(|w| w.len() == p) {
        let mut w = w.to_vec();
        for i in (0..p).filter(|&i| frozen[i]) {
            w[i] = centre[i];
        }
        starts.push(w);
    }
    while starts.len() < cfg.restarts.max(1) {
        let draw: Vec<T> = (0..p)
            .map(|i| if frozen[i] { centre[i] } else { prior.mean[i] + prior.sd[i] * rng.standard_normal::<T>() })
            .collect();
        starts.push(draw);
    }

    let objective = |theta: &[T]| log_joint(&spec, prior, data.x(), data.y(), theta);
    let search = PatternSearch { initial_step: 1.0, min_step: 1e-3, budget: cfg.budget };
    let mut best: Option<(Vec<T>, T)> = None;
    for start in starts {
        let r = pattern_search(&objective, start, None, &lower, &upper, &frozen, &search);
        if r.value.is_finite() && best.as_ref().map_or(true, |(_, v)| r.value > *v) {
            best = Some((r.point, r.value));
        }
    }
    let theta_hat = match best {
        Some((t, _)) => t,
        None => {
            log::warn!("all MAP restarts failed; falling back to the prior mean");
            centre
        }
    };
    let cache = GpCache::build(&spec, &theta_hat, data.x(), data.y(), &JitterPolicy::default())?;
    let log_joint = cache.log_marginal_likelihood(data.y()) + prior.log_density(&theta_hat);
    Ok(GpFit {
        spec,
        theta_hat,
        log_joint,
        cache,
        x: data.x().to_vec(),
        y: data.y().to_vec(),
        frozen,
        prior: prior.clone(),
    })
}

/// Gaussian approximation over log-hyperparameters. Coordinates with zero
/// variance are held at the mean: they are never sampled and carry zero
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPosterior<T> {
    mean: Vec<T>,
    cov: Matrix<T>,
    chol: Matrix<T>,
    precision: Matrix<T>,
}

impl<T: Scalar> ParamPosterior<T> {
    pub fn new(mean: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        let p = mean.len();
        if cov.rows() != p || cov.cols() != p {
            return Err(Error::DimensionMismatch { expected: p, got: cov.rows() });
        }
        let active: Vec<usize> = (0..p).filter(|&i| cov[(i, i)] > T::zero()).collect();
        let sub = Matrix::from_fn(active.len(), active.len(), |a, b| cov[(active[a], active[b])]);
        let factor = cholesky(&sub, &JitterPolicy::default())?;
        let inv = factor.inverse();
        let mut chol = Matrix::zeros(p, p);
        let mut precision = Matrix::zeros(p, p);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                chol[(i, j)] = factor.factor()[(a, b)];
                precision[(i, j)] = inv[(a, b)];
            }
        }
        let mut cov = cov;
        for i in (0..p).filter(|i| !active.contains(i)) {
            for j in 0..p {
                cov[(i, j)] = T::zero();
                cov[(j, i)] = T::zero();
            }
        }
        Ok(Self { mean, cov, chol, precision })
    }

    /// All mass on `mean`.
    pub fn point_mass(mean: Vec<T>) -> Self {
        let p = mean.len();
        Self { mean, cov: Matrix::zeros(p, p), chol: Matrix::zeros(p, p), precision: Matrix::zeros(p, p) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix<T> {
        &self.cov
    }

    pub fn chol(&self) -> &Matrix<T> {
        &self.chol
    }

    pub fn precision(&self) -> &Matrix<T> {
        &self.precision
    }

    pub fn is_degenerate(&self) -> bool {
        self.cov.max_abs() == T::zero()
    }

    pub fn sample(&self, rng: &mut RngState) -> Vec<T> {
        mvn_sample(&self.mean, &self.chol, rng)
    }

    /// `∇ log q(θ) = -Σ⁻¹ (θ - m)`.
    pub fn score(&self, theta: &[T]) -> Vec<T> {
        let diff: Vec<T> = theta.iter().zip(&self.mean).map(|(&t, &m)| t - m).collect();
        (0..self.dim()).map(|i| -dot(self.precision.row(i), &diff)).collect()
    }
}

pub(crate) const FALLBACK_VAR_FLOOR: f64 = 1e-6;
pub(crate) const FALLBACK_VAR_CAP: f64 = 4.0;

/// Laplace approximation of the log density `f` around `mode`, using a
/// central finite-difference Hessian. Falls back to a clamped diagonal when
/// the negative Hessian is not positive definite.
pub fn laplace_from_log_joint<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    mode: &[T],
    step: T,
    frozen: &[bool],
) -> ParamPosterior<T> {
    let p = mode.len();
    let active: Vec<usize> = (0..p).filter(|&i| !frozen.get(i).copied().unwrap_or(false)).collect();
    let q = active.len();
    let f0 = f(mode);
    let mut x = mode.to_vec();
    let mut eval = |shifts: &[(usize, T)]| {
        x.copy_from_slice(mode);
        for &(i, s) in shifts {
            x[i] += s;
        }
        f(&x)
    };
    let h = step;
    let mut neg_hess = Matrix::zeros(q, q);
    for a in 0..q {
        let i = active[a];
        let fp = eval(&[(i, h)]);
        let fm = eval(&[(i, -h)]);
        neg_hess[(a, a)] = -(fp - T::lit(2.0) * f0 + fm) / (h * h);
        for b in 0..a {
            let j = active[b];
            let fpp = eval(&[(i, h), (j, h)]);
            let fpm = eval(&[(i, h), (j, -h)]);
            let fmp = eval(&[(i, -h), (j, h)]);
            let fmm = eval(&[(i, -h), (j, -h)]);
            let v = -(fpp - fpm - fmp + fmm) / (T::lit(4.0) * h * h);
            neg_hess[(a, b)] = v;
            neg_hess[(b, a)] = v;
        }
    }
    let sub_cov = if neg_hess.is_finite() {
        cholesky(&neg_hess, &JitterPolicy::strict()).ok().map(|c| c.inverse())
    } else {
        None
    };
    let sub_cov = sub_cov.unwrap_or_else(|| {
        log::debug!("negative Hessian not positive definite; using diagonal fallback");
        let diag: Vec<T> = (0..q)
            .map(|a| {
                let v = T::one() / neg_hess[(a, a)].abs();
                if v.is_finite() {
                    v.max(T::lit(FALLBACK_VAR_FLOOR)).min(T::lit(FALLBACK_VAR_CAP))
                } else {
                    T::lit(FALLBACK_VAR_CAP)
                }
            })
            .collect();
        Matrix::diagonal(&diag)
    });
    let mut cov = Matrix::zeros(p, p);
    for a in 0..q {
        for b in 0..q {
            cov[(active[a], active[b])] = sub_cov[(a, b)];
        }
    }
    ParamPosterior::new(mode.to_vec(), cov).unwrap_or_else(|_| ParamPosterior::point_mass(mode.to_vec()))
}

pub fn laplace_posterior<T: Scalar>(fit: &GpFit<T>, cfg: &GpFitConfig) -> ParamPosterior<T> {
    laplace_from_log_joint(|t| fit.log_joint_at(t), &fit.theta_hat, T::lit(cfg.hessian_step), &fit.frozen)
}

pub fn score<T: Scalar>(q: &ParamPosterior<T>, theta: &[T]) -> Vec<T> {
    q.score(theta)
}

/// Log density of a standardized observation `y` at `x` under the MAP
/// predictive `N(μ, σ² + σ_n²)`.
pub fn predictive_log_score<T: Scalar>(fit: &GpFit<T>, x: &[T], y: T) -> T {
    let (mean, var) = fit.predict(x);
    gaussian_log_density(y, mean, var + fit.noise_var())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::math::stats::empirical_cov;

    const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

    fn rbf(dim: usize) -> KernelSpec {
        KernelSpec::new(KernelFamily::RbfIso, dim)
    }

    #[test]
    fn evidence_single_point() {
        let spec = rbf(1);
        let x = vec![vec![0.5]];
        let near_zero_noise = [0.0, 0.0, -30.0];
        let v = log_marginal_likelihood_raw(&spec, &near_zero_noise, &x, &[0.0]).unwrap();
        assert!((v + HALF_LOG_2PI).abs() < 1e-12);
        let v = log_marginal_likelihood_raw(&spec, &near_zero_noise, &x, &[1.0]).unwrap();
        assert!((v - (-0.5 - HALF_LOG_2PI)).abs() < 1e-12);
    }

    /// Two-point evidence against the closed form for `K_y = [[a, b], [b, a]]`.
    #[test]
    fn evidence_two_points_closed_form() {
        let spec = rbf(1);
        let theta = [0.2_f64.ln(), 0.3, 0.1_f64.ln()];
        let x = vec![vec![0.2], vec![0.5]];
        let y = [0.7, -1.1];
        let sf2 = (0.6_f64).exp();
        let a = sf2 + 0.01;
        let b = sf2 * (-0.5 * (0.3 / 0.2_f64).powi(2)).exp();
        let det = a * a - b * b;
        let quad = (a * y[0] * y[0] - 2.0 * b * y[0] * y[1] + a * y[1] * y[1]) / det;
        let want = -0.5 * quad - 0.5 * det.ln() - 2.0 * HALF_LOG_2PI;
        let got = log_marginal_likelihood_raw(&spec, &theta, &x, &y).unwrap();
        assert!((got - want).abs() < 1e-12);
        // An exact duplicate of a point: same closed form with b = sf2.
        let dup = vec![vec![0.2], vec![0.2]];
        let yd = [0.7, 0.7];
        let bd = sf2;
        let detd = a * a - bd * bd;
        let quadd = (a - bd) * 2.0 * 0.49 / detd;
        let wantd = -0.5 * quadd - 0.5 * detd.ln() - 2.0 * HALF_LOG_2PI;
        let gotd = log_marginal_likelihood_raw(&spec, &theta, &dup, &yd).unwrap();
        assert!((gotd - wantd).abs() < 1e-10);
    }

    #[test]
    fn standardization_round_trip() {
        let y: Vec<f64> = vec![3.0, -1.5, 2.25, 8.0, 0.1];
        let s = Standardization::from_values(&y);
        for &v in &y {
            assert!((s.destandardize(s.standardize(v)) - v).abs() < 1e-12);
        }
        let data = ObservationSet::new(vec![vec![0.1]; 5], y).unwrap();
        assert!(shifted_mean(data.y()).abs() < 1e-15);
        assert!((sample_variance(data.y()) - 1.0).abs() < 1e-12);
        assert_eq!(data.f_star(), -1.5);
    }

    #[test]
    fn degenerate_standardization() {
        let one = Standardization::from_values(&[4.0]);
        assert_eq!((one.mean, one.scale), (4.0, 1.0));
        let flat = Standardization::from_values(&[2.0; 6]);
        assert_eq!((flat.mean, flat.scale), (2.0, 1.0));
    }

    #[test]
    fn rejects_points_outside_cube() {
        assert!(ObservationSet::new(vec![vec![1.2]], vec![0.0]).is_err());
        assert!(ObservationSet::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn predict_scalar_example() {
        // k(λ,λ)=1, k(λ,x₁)=0.5 with an RBF at distance √(2 ln 2)·ℓ.
        let spec = rbf(1);
        let ls = 0.2;
        let dist = (2.0 * 2.0_f64.ln()).sqrt() * ls;
        let theta = [ls.ln(), 0.0, -30.0];
        let x = vec![vec![0.1]];
        let cache = GpCache::build(&spec, &theta, &x, &[2.0], &JitterPolicy::default()).unwrap();
        let (mean, var) = cache.predict(&x, &[0.1 + dist]);
        assert!((mean - 1.0).abs() < 1e-12);
        assert!((var - 0.75).abs() < 1e-12);
    }

    #[test]
    fn far_point_recovers_prior() {
        let spec = rbf(1);
        let theta = [0.01_f64.ln(), 0.4_f64.ln(), 0.1_f64.ln()];
        let x = vec![vec![0.0]];
        let cache = GpCache::build(&spec, &theta, &x, &[1.3], &JitterPolicy::default()).unwrap();
        let (mean, var) = cache.predict(&x, &[1.0]);
        assert_eq!(mean, 0.0);
        assert!((var - 0.16).abs() < 1e-15);
    }

    #[test]
    fn noiseless_interpolation() {
        let spec = rbf(2);
        let theta = [0.3_f64.ln(), 0.0, -9.0];
        let x = vec![vec![0.1, 0.2], vec![0.7, 0.4], vec![0.4, 0.9]];
        let y = [0.5, -1.0, 0.3];
        let cache = GpCache::build(&spec, &theta, &x, &y, &JitterPolicy::default()).unwrap();
        for (p, &v) in x.iter().zip(&y) {
            let (m, s2) = cache.predict(&x, p);
            assert!((m - v).abs() < 1e-6 && s2 < 1e-6);
        }
    }

    #[test]
    fn adding_query_point_never_raises_variance() {
        let spec = KernelSpec::new(KernelFamily::Matern52Ard, 2);
        let theta = [0.2_f64.ln(), 0.5_f64.ln(), 0.3, 0.05_f64.ln()];
        let mut rng = RngState::new(8);
        let mut x: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
        let mut y: Vec<f64> = (0..6).map(|_| rng.standard_normal()).collect();
        for _ in 0..10 {
            let q = vec![rng.uniform(), rng.uniform()];
            let before = GpCache::build(&spec, &theta, &x, &y, &JitterPolicy::default()).unwrap().predict(&x, &q).1;
            x.push(q.clone());
            y.push(rng.standard_normal());
            let after = GpCache::build(&spec, &theta, &x, &y, &JitterPolicy::default()).unwrap().predict(&x, &q).1;
            assert!(after <= before + 1e-12);
        }
    }

    #[test]
    fn fit_is_deterministic_and_beats_restart_endpoints() {
        let mut rng = RngState::new(1);
        let x: Vec<Vec<f64>> = (0..15).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin() + p[1]).collect();
        let data = ObservationSet::new(x, y).unwrap();
        let spec = KernelSpec::new(KernelFamily::Matern52Ard, 2);
        let prior = HyperPrior::default_for(&spec);
        let cfg = GpFitConfig::default();
        let a = fit_map(&data, spec, &prior, &cfg, None, &mut RngState::new(7)).unwrap();
        let b = fit_map(&data, spec, &prior, &cfg, None, &mut RngState::new(7)).unwrap();
        assert_eq!(a.theta_hat(), b.theta_hat());
        assert!(a.log_joint() >= a.log_joint_at(&prior.mean));
    }

    #[test]
    fn constant_responses_predict_constant() {
        let x: Vec<Vec<f64>> = crate::math::sobol::sobol_points(2, 10, 1).unwrap();
        let data = ObservationSet::new(x, vec![3.5; 10]).unwrap();
        let spec = rbf(2);
        let fit = fit_map(&data, spec, &HyperPrior::default_for(&spec), &GpFitConfig::default(), None, &mut RngState::new(2)).unwrap();
        for q in [[0.3, 0.3], [0.9, 0.05], [0.5, 0.5]] {
            let (m, _) = fit.predict(&q);
            assert!(m.abs() < 0.05);
            assert!((data.standardization().destandardize(m) - 3.5).abs() < 0.05);
        }
    }

    #[test]
    fn single_observation_fit() {
        let data = ObservationSet::<f64>::new(vec![vec![0.4, 0.6]], vec![-2.0]).unwrap();
        let spec = rbf(2);
        let fit = fit_map(&data, spec, &HyperPrior::default_for(&spec), &GpFitConfig::default(), None, &mut RngState::new(3)).unwrap();
        let (m, _) = fit.predict(&[0.4, 0.6]);
        let sigma_n = fit.noise_var().sqrt();
        assert!((data.standardization().destandardize(m) + 2.0).abs() <= sigma_n * data.standardization().scale + 1e-12);
    }

    #[test]
    fn fixed_noise_is_pinned() {
        let mut rng = RngState::new(4);
        let x: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.uniform()]).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0] * p[0]).collect();
        let data = ObservationSet::new(x, y).unwrap();
        let spec = rbf(1);
        let cfg = GpFitConfig { fixed_log_noise: Some(-3.0), ..GpFitConfig::default() };
        let fit = fit_map(&data, spec, &HyperPrior::default_for(&spec), &cfg, None, &mut rng).unwrap();
        assert_eq!(fit.theta_hat()[spec.noise_index()], -3.0);
        let q = laplace_posterior(&fit, &cfg);
        assert_eq!(q.cov()[(2, 2)], 0.0);
        assert_eq!(q.score(&[0.0, 0.0, 5.0])[2], 0.0);
    }

    #[test]
    fn laplace_recovers_quadratic() {
        let a = [0.3, -1.0, 2.0];
        let p = Matrix::from_rows(&[vec![2.0, 0.5, 0.0], vec![0.5, 1.0, 0.2], vec![0.0, 0.2, 3.0]]).unwrap();
        let f = |t: &[f64]| {
            let d: Vec<f64> = t.iter().zip(&a).map(|(x, m)| x - m).collect();
            -0.5 * dot(&d, &p.matvec(&d).unwrap())
        };
        let q = laplace_from_log_joint(f, &a, 1e-3, &[]);
        let want = cholesky(&p, &JitterPolicy::strict()).unwrap().inverse();
        assert_eq!(q.mean(), &a);
        assert!(q.cov().sub(&want).unwrap().max_abs() < 1e-4);
    }

    #[test]
    fn laplace_scalar_curvature() {
        let q = laplace_from_log_joint(|t: &[f64]| -(t[0] - 1.0).powi(2), &[1.0], 1e-3, &[]);
        assert!((q.cov()[(0, 0)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn laplace_indefinite_fallback() {
        let f = |t: &[f64]| -t[0] * t[0] + 3.0 * t[1] * t[1] - 1e-9 * t[2] * t[2];
        let q = laplace_from_log_joint(f, &[0.0, 0.0, 0.0], 1e-3, &[]);
        for i in 0..3 {
            let v = q.cov()[(i, i)];
            assert!((FALLBACK_VAR_FLOOR..=FALLBACK_VAR_CAP).contains(&v));
        }
        assert_eq!(q.cov()[(0, 1)], 0.0);
    }

    #[test]
    fn score_examples() {
        let q = ParamPosterior::new(vec![0.5, -0.2], Matrix::identity(2)).unwrap();
        assert_eq!(q.score(&[0.5, -0.2]), vec![0.0, 0.0]);
        assert_eq!(q.score(&[1.5, -0.2]), vec![-1.0, 0.0]);
    }

    #[test]
    fn score_moments_under_q() {
        let cov = Matrix::from_rows(&[vec![0.5, 0.1, 0.0], vec![0.1, 0.3, -0.05], vec![0.0, -0.05, 1.2]]).unwrap();
        let q = ParamPosterior::new(vec![0.1, -1.0, 0.4], cov).unwrap();
        let mut rng = RngState::new(12);
        let g: Vec<Vec<f64>> = (0..10_000).map(|_| q.score(&q.sample(&mut rng))).collect();
        let emp = empirical_cov(&g, &g).unwrap();
        for i in 0..3 {
            let col: Vec<f64> = g.iter().map(|r| r[i]).collect();
            let m = shifted_mean(&col);
            let se = (sample_variance(&col) / 10_000.0).sqrt();
            assert!(m.abs() <= 3.0 * se);
        }
        let rel = emp.sub(q.precision()).unwrap().frobenius_norm() / q.precision().frobenius_norm();
        assert!(rel < 0.1, "relative error {rel}");
    }

    #[test]
    fn point_mass_has_zero_score() {
        let q = ParamPosterior::point_mass(vec![1.0, 2.0]);
        assert!(q.is_degenerate());
        assert_eq!(q.sample(&mut RngState::new(1)), vec![1.0, 2.0]);
        assert_eq!(q.score(&[3.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn predictive_log_score_examples() {
        // Single far-away point: μ = 0, σ² = σ_f², so pick σ_f² + σ_n² values.
        let data = ObservationSet::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let spec = rbf(1);
        let sf2: f64 = 0.75;
        let theta = vec![0.001_f64.ln(), 0.5 * sf2.ln(), 0.5 * 0.25_f64.ln()];
        let fit = GpFit::at(&data, spec, theta).unwrap();
        assert!((predictive_log_score(&fit, &[1.0], 0.0) + HALF_LOG_2PI).abs() < 1e-12);
        assert!((predictive_log_score(&fit, &[1.0], 1.0) - (-0.5 - HALF_LOG_2PI)).abs() < 1e-12);
        let theta = vec![0.001_f64.ln(), 0.5 * 0.2_f64.ln(), 0.5 * 0.05_f64.ln()];
        let fit = GpFit::at(&data, spec, theta).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI * 0.25).ln();
        assert!((predictive_log_score(&fit, &[1.0], 0.0) - want).abs() < 1e-12);
    }
}
