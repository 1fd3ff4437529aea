//! Empirical moments over sample sets.

use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::scalar::{shifted_mean, Scalar};

fn column_means<T: Scalar>(rows: &[Vec<T>], width: usize) -> Vec<T> {
    (0..width)
        .map(|j| shifted_mean(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect()
}

fn width_of<T>(rows: &[Vec<T>]) -> Result<usize> {
    let w = rows.first().map_or(0, Vec::len);
    match rows.iter().find(|r| r.len() != w) {
        Some(r) => Err(Error::DimensionMismatch { expected: w, got: r.len() }),
        None => Ok(w),
    }
}

/// Unbiased cross-covariance between paired samples `x[s]` (d-vectors) and
/// `y[s]` (e-vectors). Passing the same slice twice gives the symmetric
/// self-covariance.
pub fn empirical_cov<T: Scalar>(x: &[Vec<T>], y: &[Vec<T>]) -> Result<Matrix<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let s = x.len();
    if s < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: s });
    }
    let (dx, dy) = (width_of(x)?, width_of(y)?);
    let (mx, my) = (column_means(x, dx), column_means(y, dy));
    let same = std::ptr::eq(x, y);
    let denom = T::from_count(s - 1);
    let mut out = Matrix::zeros(dx, dy);
    for i in 0..dx {
        let start = if same { i } else { 0 };
        for j in start..dy {
            let mut acc = T::zero();
            for (xr, yr) in x.iter().zip(y) {
                acc += (xr[i] - mx[i]) * (yr[j] - my[j]);
            }
            out[(i, j)] = acc / denom;
            if same {
                out[(j, i)] = out[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Covariance of each column of `x` with the scalar samples `h`.
pub fn cov_with<T: Scalar>(x: &[Vec<T>], h: &[T]) -> Result<Vec<T>> {
    let col: Vec<Vec<T>> = h.iter().map(|&v| vec![v]).collect();
    let m = empirical_cov(x, &col)?;
    Ok((0..m.rows()).map(|i| m[(i, 0)]).collect())
}
