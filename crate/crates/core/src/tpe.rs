//! Tree-structured Parzen estimator surrogate with a bootstrap distribution
//! over its fitted summaries.
//!
//! Good and bad sets come from a rank split at the `⌈γ·n⌉` best responses.
//! Each set is modelled by a product Gaussian KDE truncated to the unit
//! cube. The bootstrap summaries `(log b_good, log b_bad, y*)` are centered
//! across resamples and act as zero-mean control variates.

use crate::acquisition::{AcquisitionEstimate, CvConfig, Orthogonalizer};
use crate::error::{Error, Result};
use crate::gp::ObservationSet;
use crate::math::normal::{normal_cdf_both, normal_sf};
use crate::math::rng::RngState;
use crate::scalar::{sample_variance, shifted_mean, Scalar};

pub const BANDWIDTH_FLOOR: f64 = 1e-3;
pub const DENOMINATOR_FLOOR: f64 = 1e-12;
const MAX_REDRAWS: usize = 10;
const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Product Gaussian KDE renormalized on `[0, 1]` in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde<T> {
    points: Vec<Vec<T>>,
    bandwidths: Vec<T>,
    inv_bandwidths: Vec<T>,
    /// Per-point log normalizer: bandwidths, truncation mass and `1/n`.
    log_norm: Vec<T>,
}

impl<T: Scalar> Kde<T> {
    pub fn new(points: Vec<Vec<T>>, bandwidths: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData("a KDE needs at least one point".into()));
        }
        if bandwidths.iter().any(|b| !(*b > T::zero())) {
            return Err(Error::InvalidConfig("KDE bandwidths must be positive".into()));
        }
        let d = bandwidths.len();
        let log_n = T::from_count(points.len()).ln();
        let log_norm = points
            .iter()
            .map(|p| {
                let mut acc = log_n + T::lit(LOG_SQRT_2PI) * T::from_count(d);
                for (&c, &b) in p.iter().zip(&bandwidths) {
                    acc += b.ln() + truncation_mass(c, b).ln();
                }
                acc
            })
            .collect();
        let inv_bandwidths = bandwidths.iter().map(|&b| T::one() / b).collect();
        Ok(Self { points, bandwidths, inv_bandwidths, log_norm })
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn bandwidths(&self) -> &[T] {
        &self.bandwidths
    }

    pub fn log_density(&self, x: &[T]) -> T {
        let half = T::lit(0.5);
        let mut best = T::neg_infinity();
        let mut terms = Vec::with_capacity(self.points.len());
        for (p, &norm) in self.points.iter().zip(&self.log_norm) {
            let mut q = T::zero();
            for ((&xv, &pv), &w) in x.iter().zip(p).zip(&self.inv_bandwidths) {
                let u = (xv - pv) * w;
                q += u * u;
            }
            let t = -half * q - norm;
            best = best.max(t);
            terms.push(t);
        }
        if best == T::neg_infinity() {
            return best;
        }
        best + terms.into_iter().map(|t| (t - best).exp()).sum::<T>().ln()
    }

    pub fn density(&self, x: &[T]) -> T {
        self.log_density(x).exp()
    }
}

/// Mass of `N(centre, b²)` inside `[0, 1]`.
fn truncation_mass<T: Scalar>(centre: T, b: T) -> T {
    let hi = (T::one() - centre) / b;
    let lo = -centre / b;
    // Difference of upper tails avoids cancellation when both bounds sit
    // far in the same tail.
    if lo > T::zero() {
        normal_sf(lo) - normal_sf(hi)
    } else {
        let (cdf_hi, _) = normal_cdf_both(hi);
        let (cdf_lo, _) = normal_cdf_both(lo);
        cdf_hi - cdf_lo
    }
}

/// Linear-interpolation quantile of sorted values.
fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Silverman's rule per coordinate, `0.9·min(sd, IQR/1.34)·m^{-1/5}`, with
/// the standard deviation alone when the IQR vanishes, floored at 1e-3.
pub fn silverman_bandwidths<T: Scalar>(points: &[Vec<T>]) -> Vec<T> {
    let m = points.len();
    let d = points.first().map_or(0, Vec::len);
    let factor = T::lit(0.9) * T::from_count(m).powf(T::lit(-0.2));
    (0..d)
        .map(|j| {
            let mut col: Vec<T> = points.iter().map(|p| p[j]).collect();
            let sd = sample_variance(&col).sqrt();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let iqr = if m > 1 { quantile(&col, 0.75) - quantile(&col, 0.25) } else { T::zero() };
            let spread = if iqr > T::zero() { sd.min(iqr / T::lit(1.34)) } else { sd };
            (factor * spread).max(T::lit(BANDWIDTH_FLOOR))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpeModel<T> {
    pub threshold: T,
    pub good: Kde<T>,
    pub bad: Kde<T>,
}

impl<T: Scalar> TpeModel<T> {
    /// `ℓ(x) / (g(x) + ε)`.
    pub fn acquisition(&self, x: &[T]) -> T {
        self.good.density(x) / (self.bad.density(x) + T::lit(DENOMINATOR_FLOOR))
    }

    /// Log density of `x` under the set-size-weighted mixture of both KDEs.
    pub fn log_density(&self, x: &[T]) -> T {
        let n_good = T::from_count(self.good.points.len());
        let n_bad = T::from_count(self.bad.points.len());
        let total = n_good + n_bad;
        let a = (n_good / total).ln() + self.good.log_density(x);
        let b = (n_bad / total).ln() + self.bad.log_density(x);
        let m = a.max(b);
        if m == T::neg_infinity() {
            return m;
        }
        m + ((a - m).exp() + (b - m).exp()).ln()
    }

    /// `(log b_good, log b_bad, y*)`.
    pub fn summary(&self) -> Vec<T> {
        let mut phi: Vec<T> = self.good.bandwidths.iter().map(|b| b.ln()).collect();
        phi.extend(self.bad.bandwidths.iter().map(|b| b.ln()));
        phi.push(self.threshold);
        phi
    }
}

/// Size of the good set for `n` observations.
pub fn good_count(n: usize, quantile: f64) -> usize {
    // Tolerance keeps e.g. 0.2·15 from rounding up to 4.
    ((quantile * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn fit_slices<T: Scalar>(x: &[Vec<T>], y: &[T], quantile: f64) -> Result<TpeModel<T>> {
    let n = y.len();
    let n_good = good_count(n, quantile);
    if n_good == 0 || n_good >= n {
        return Err(Error::InsufficientData(format!(
            "quantile split of {n} observations leaves an empty set (good size {n_good})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap_or(std::cmp::Ordering::Equal));
    let threshold = (y[order[n_good - 1]] + y[order[n_good]]) * T::lit(0.5);
    let good_pts: Vec<Vec<T>> = order[..n_good].iter().map(|&i| x[i].clone()).collect();
    let bad_pts: Vec<Vec<T>> = order[n_good..].iter().map(|&i| x[i].clone()).collect();
    let good_bw = silverman_bandwidths(&good_pts);
    let bad_bw = silverman_bandwidths(&bad_pts);
    Ok(TpeModel { threshold, good: Kde::new(good_pts, good_bw)?, bad: Kde::new(bad_pts, bad_bw)? })
}

/// Fits one model on the full history.
pub fn tpe_fit<T: Scalar>(data: &ObservationSet<T>, quantile: f64) -> Result<TpeModel<T>> {
    fit_slices(data.x(), data.y_raw(), quantile)
}

pub fn tpe_acquisition<T: Scalar>(model: &TpeModel<T>, x: &[T]) -> T {
    model.acquisition(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapEnsemble<T> {
    models: Vec<TpeModel<T>>,
    summaries: Vec<Vec<T>>,
    control_variates: Vec<Vec<T>>,
    fallbacks: usize,
}

impl<T: Scalar> BootstrapEnsemble<T> {
    pub fn models(&self) -> &[TpeModel<T>] {
        &self.models
    }

    pub fn summaries(&self) -> &[Vec<T>] {
        &self.summaries
    }

    /// Centered summaries `φ_s - mean(φ)`.
    pub fn control_variates(&self) -> &[Vec<T>] {
        &self.control_variates
    }

    /// Slots that fell back to the full-data fit.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn acquisition_values(&self, x: &[T]) -> Vec<T> {
        self.models.iter().map(|m| m.acquisition(x)).collect()
    }

    pub fn orthogonalizer(&self, cfg: &CvConfig) -> Orthogonalizer<T> {
        Orthogonalizer::new(&self.control_variates, cfg)
    }
}

/// `samples` models fitted on with-replacement resamples of the history.
pub fn tpe_bootstrap<T: Scalar>(data: &ObservationSet<T>, samples: usize, quantile: f64, rng: &mut RngState) -> Result<BootstrapEnsemble<T>> {
    let full = tpe_fit(data, quantile)?;
    let n = data.len();
    let mut models = Vec::with_capacity(samples);
    let mut fallbacks = 0;
    for _ in 0..samples {
        let mut fitted = None;
        for _ in 0..=MAX_REDRAWS {
            let idx: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
            let x: Vec<Vec<T>> = idx.iter().map(|&i| data.x()[i].clone()).collect();
            let y: Vec<T> = idx.iter().map(|&i| data.y_raw()[i]).collect();
            if let Ok(m) = fit_slices(&x, &y, quantile) {
                fitted = Some(m);
                break;
            }
        }
        models.push(fitted.unwrap_or_else(|| {
            fallbacks += 1;
            full.clone()
        }));
    }
    let summaries: Vec<Vec<T>> = models.iter().map(TpeModel::summary).collect();
    let width = summaries.first().map_or(0, Vec::len);
    let means: Vec<T> = (0..width).map(|j| shifted_mean(&summaries.iter().map(|s| s[j]).collect::<Vec<_>>())).collect();
    let control_variates = summaries.iter().map(|s| s.iter().zip(&means).map(|(&v, &m)| v - m).collect()).collect();
    Ok(BootstrapEnsemble { models, summaries, control_variates, fallbacks })
}

/// Orthogonalized bootstrap-mean TPE acquisition at `x`.
pub fn tpe_orth<T: Scalar>(ens: &BootstrapEnsemble<T>, x: &[T], cfg: &CvConfig) -> AcquisitionEstimate<T> {
    ens.orthogonalizer(cfg).estimate(ens.acquisition_values(x), ens.control_variates.clone())
}
