//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real scalar type the numerical core is generic over. Implemented for
/// `f32` and `f64`; accuracy targets quoted in the docs refer to `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance used for symmetry and degeneracy checks.
    fn loose_eps() -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn loose_eps() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    #[inline]
    fn loose_eps() -> Self {
        1e-10
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Arithmetic mean computed around the first element, so a constant input
/// returns that constant exactly.
pub fn shifted_mean<T: Scalar>(values: &[T]) -> T {
    match values.first() {
        None => T::zero(),
        Some(&first) => {
            let n = T::from_count(values.len());
            first + compensated_sum(values.iter().map(|&v| v - first)) / n
        }
    }
}

/// Unbiased sample variance (divisor `n - 1`); zero for fewer than two values.
pub fn sample_variance<T: Scalar>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let mean = shifted_mean(values);
    let ss = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
    ss / T::from_count(values.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_mean_is_exact_on_constants() {
        let v = vec![0.1_f64; 7];
        assert_eq!(shifted_mean(&v), 0.1);
        assert_eq!(sample_variance(&v), 0.0);
    }

    #[test]
    fn variance_of_pair() {
        assert_eq!(sample_variance(&[-1.0_f64, 1.0]), 2.0);
        assert_eq!(sample_variance(&[3.0_f32]), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16_f64, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
