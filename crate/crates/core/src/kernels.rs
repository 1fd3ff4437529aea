//! Covariance kernels and their log-space hyperparameter layouts.
//!
//! A hyperparameter vector is laid out as `[log ℓ.., log σ_f, log σ_n]`:
//! one lengthscale for isotropic families, `d` for ARD, none for the linear
//! kernel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelFamily {
    RbfIso,
    RbfArd,
    Matern52Iso,
    Matern52Ard,
    Linear,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] =
        [Self::RbfIso, Self::RbfArd, Self::Matern52Iso, Self::Matern52Ard, Self::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Self::RbfIso => "rbf-iso",
            Self::RbfArd => "rbf-ard",
            Self::Matern52Iso => "matern52-iso",
            Self::Matern52Ard => "matern52-ard",
            Self::Linear => "linear",
        }
    }

    pub fn is_stationary(self) -> bool {
        !matches!(self, Self::Linear)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName { kind: "kernel", name: s.to_owned() })
    }
}

impl TryFrom<String> for KernelFamily {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelFamily> for String {
    fn from(k: KernelFamily) -> Self {
        k.name().to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize) -> Self {
        Self { family, dim }
    }

    pub fn n_lengthscales(&self) -> usize {
        match self.family {
            KernelFamily::RbfIso | KernelFamily::Matern52Iso => 1,
            KernelFamily::RbfArd | KernelFamily::Matern52Ard => self.dim,
            KernelFamily::Linear => 0,
        }
    }

    /// Length of the full hyperparameter vector including the noise term.
    pub fn theta_len(&self) -> usize {
        self.n_lengthscales() + 2
    }

    pub fn amplitude_index(&self) -> usize {
        self.n_lengthscales()
    }

    pub fn noise_index(&self) -> usize {
        self.n_lengthscales() + 1
    }

    pub fn layout(&self) -> Vec<String> {
        let mut names: Vec<String> = match self.n_lengthscales() {
            0 => Vec::new(),
            1 => vec!["log_lengthscale".into()],
            n => (0..n).map(|i| format!("log_lengthscale_{i}")).collect(),
        };
        names.push("log_amplitude".into());
        names.push("log_noise".into());
        names
    }

    /// Exponentiates `theta` into the form the kernel evaluation uses.
    pub fn resolve<T: Scalar>(&self, theta: &[T]) -> Result<KernelParams<T>> {
        if theta.len() != self.theta_len() {
            return Err(Error::DimensionMismatch { expected: self.theta_len(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite hyperparameter".into()));
        }
        let inv_lengthscales = match self.n_lengthscales() {
            0 => Vec::new(),
            1 => vec![(-theta[0]).exp(); self.dim],
            _ => theta[..self.dim].iter().map(|l| (-*l).exp()).collect(),
        };
        let amp = theta[self.amplitude_index()].exp();
        let noise = theta[self.noise_index()].exp();
        Ok(KernelParams {
            family: self.family,
            dim: self.dim,
            inv_lengthscales,
            signal_var: amp * amp,
            noise_var: noise * noise,
        })
    }
}

/// Hyperparameters in their natural (exponentiated) form.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams<T> {
    pub family: KernelFamily,
    pub dim: usize,
    pub inv_lengthscales: Vec<T>,
    pub signal_var: T,
    pub noise_var: T,
}

impl<T: Scalar> KernelParams<T> {
    /// Kernel value without dimension checks.
    #[inline]
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match self.family {
            KernelFamily::Linear => {
                let c = T::lit(0.5);
                let ip = x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - c) * (b - c));
                self.signal_var * ip
            }
            KernelFamily::RbfIso | KernelFamily::RbfArd => {
                (-T::lit(0.5) * self.scaled_sq_dist(x, y)).exp() * self.signal_var
            }
            KernelFamily::Matern52Iso | KernelFamily::Matern52Ard => {
                let r = self.scaled_sq_dist(x, y).sqrt() * T::lit(5.0_f64.sqrt());
                self.signal_var * (T::one() + r + r * r / T::lit(3.0)) * (-r).exp()
            }
        }
    }

    #[inline]
    fn scaled_sq_dist(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for ((&a, &b), &w) in x.iter().zip(y).zip(&self.inv_lengthscales) {
            let u = (a - b) * w;
            acc += u * u;
        }
        acc
    }

    /// Prior variance `k(x, x)`.
    pub fn diag_value(&self, x: &[T]) -> T {
        if self.family.is_stationary() {
            self.signal_var
        } else {
            self.eval(x, x)
        }
    }

    pub fn gram(&self, points: &[Vec<T>]) -> Matrix<T> {
        let n = points.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.diag_value(&points[i]);
            for j in 0..i {
                let v = self.eval(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn cross(&self, points: &[Vec<T>], x: &[T]) -> Vec<T> {
        points.iter().map(|p| self.eval(p, x)).collect()
    }
}

fn check_dim(spec: &KernelSpec, x: &[impl Sized]) -> Result<()> {
    if x.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: x.len() });
    }
    Ok(())
}

pub fn kernel_eval<T: Scalar>(spec: &KernelSpec, theta: &[T], x: &[T], y: &[T]) -> Result<T> {
    check_dim(spec, x)?;
    check_dim(spec, y)?;
    Ok(spec.resolve(theta)?.eval(x, y))
}

/// Gram matrix over `points` (without the noise term).
pub fn gram<T: Scalar>(spec: &KernelSpec, theta: &[T], points: &[Vec<T>]) -> Result<Matrix<T>> {
    for p in points {
        check_dim(spec, p)?;
    }
    Ok(spec.resolve(theta)?.gram(points))
}
