//! Derivative-free coordinate pattern search inside a box.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSearch {
    pub initial_step: f64,
    pub min_step: f64,
    /// Maximum number of objective evaluations, including the start point
    /// when its value is not supplied.
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<T> {
    pub point: Vec<T>,
    pub value: T,
    pub evaluations: usize,
}

/// Maximizes `f` by polling `x ± step·e_i` one coordinate at a time, halving
/// the step after a sweep without improvement. Non-finite values count as
/// `-inf`. Coordinates flagged in `frozen` never move.
pub fn pattern_search<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    start: Vec<T>,
    start_value: Option<T>,
    lower: &[T],
    upper: &[T],
    frozen: &[bool],
    cfg: &PatternSearch,
) -> SearchResult<T> {
    let clean = |v: T| if v.is_finite() { v } else { T::neg_infinity() };
    let mut evaluations = 0;
    let mut x: Vec<T> = start.iter().zip(lower.iter().zip(upper)).map(|(&v, (&lo, &hi))| v.max(lo).min(hi)).collect();
    let mut best = match start_value {
        Some(v) if x == start => clean(v),
        _ => {
            if cfg.budget == 0 {
                return SearchResult { point: x, value: start_value.map_or(T::neg_infinity(), clean), evaluations };
            }
            evaluations += 1;
            clean(f(&x))
        }
    };
    let mut step = T::lit(cfg.initial_step);
    let min_step = T::lit(cfg.min_step);
    let mut trial = x.clone();
    'outer: while step >= min_step {
        let mut improved = false;
        for i in 0..x.len() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            for dir in [T::one(), -T::one()] {
                let moved = (x[i] + dir * step).max(lower[i]).min(upper[i]);
                if moved == x[i] {
                    continue;
                }
                if evaluations >= cfg.budget {
                    break 'outer;
                }
                trial.copy_from_slice(&x);
                trial[i] = moved;
                evaluations += 1;
                let v = clean(f(&trial));
                if v > best {
                    best = v;
                    x[i] = moved;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step = step * T::lit(0.5);
        }
    }
    SearchResult { point: x, value: best, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(budget: usize) -> PatternSearch {
        PatternSearch { initial_step: 0.1, min_step: 1e-3, budget }
    }

    #[test]
    fn finds_box_interior_maximum() {
        let f = |x: &[f64]| -((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2));
        let r = pattern_search(f, vec![0.05, 0.93], None, &[0.0; 2], &[1.0; 2], &[], &cfg(500));
        assert!((r.point[0] - 0.5).abs() < 5e-3 && (r.point[1] - 0.5).abs() < 5e-3);
    }

    #[test]
    fn respects_bounds_and_frozen_coordinates() {
        let f = |x: &[f64]| x[0] + x[1];
        let r = pattern_search(f, vec![0.5, 0.5], None, &[0.0; 2], &[1.0; 2], &[false, true], &cfg(500));
        assert!((r.point[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.point[1], 0.5);
    }

    #[test]
    fn zero_budget_returns_start() {
        let r = pattern_search(|_: &[f64]| 1.0, vec![0.2], Some(3.0), &[0.0], &[1.0], &[], &cfg(0));
        assert_eq!((r.point, r.value, r.evaluations), (vec![0.2], 3.0, 0));
    }

    #[test]
    fn budget_is_respected() {
        let mut calls = 0;
        let r = pattern_search(
            |x: &[f64]| {
                calls += 1;
                -x[0].powi(2)
            },
            vec![0.9],
            None,
            &[-1.0],
            &[1.0],
            &[],
            &cfg(7),
        );
        assert_eq!(calls, 7);
        assert_eq!(r.evaluations, 7);
    }

    #[test]
    fn non_finite_values_never_win() {
        let f = |x: &[f64]| if x[0] > 0.55 { f64::NAN } else { x[0] };
        let r = pattern_search(f, vec![0.5], None, &[0.0], &[1.0], &[], &cfg(100));
        assert!(r.point[0] <= 0.55 && r.value.is_finite());
    }
}
