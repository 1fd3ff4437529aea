//! Synthetic test objectives with known minima, evaluated through an affine
//! map from the unit cube, plus the pessimistic-outlier corruption switch.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Hartmann6,
    Ackley,
    Michalewicz,
    Levy,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub f_opt: f64,
    /// Native-coordinate minimizer, when known.
    pub argmin: Option<Vec<f64>>,
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const HARTMANN_ARGMIN: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
const HARTMANN_MIN: f64 = -3.32237;
const MICHALEWICZ_STEEPNESS: i32 = 10;

impl Objective {
    pub fn new(kind: ObjectiveKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("objective dimension must be positive".into()));
        }
        let boxed = |lo: f64, hi: f64| (vec![lo; dim], vec![hi; dim]);
        let (lower, upper, f_opt, argmin) = match kind {
            ObjectiveKind::Hartmann6 => {
                if dim != 6 {
                    return Err(Error::DimensionMismatch { expected: 6, got: dim });
                }
                let (l, u) = boxed(0.0, 1.0);
                (l, u, HARTMANN_MIN, Some(HARTMANN_ARGMIN.to_vec()))
            }
            ObjectiveKind::Ackley => {
                let (l, u) = boxed(-32.768, 32.768);
                (l, u, 0.0, Some(vec![0.0; dim]))
            }
            ObjectiveKind::Michalewicz => {
                let (l, u) = boxed(0.0, PI);
                let argmin: Vec<f64> = (1..=dim).map(michalewicz_coordinate_argmin).collect();
                let f_opt = michalewicz(&argmin);
                (l, u, f_opt, Some(argmin))
            }
            ObjectiveKind::Levy => {
                let (l, u) = boxed(-10.0, 10.0);
                (l, u, 0.0, Some(vec![1.0; dim]))
            }
            ObjectiveKind::Quadratic => {
                let (l, u) = boxed(0.0, 1.0);
                (l, u, 0.0, Some(vec![0.3; dim]))
            }
        };
        Ok(Self { kind, dim, lower, upper, f_opt, argmin })
    }

    pub fn name(&self) -> String {
        match self.kind {
            ObjectiveKind::Hartmann6 => "hartmann6".into(),
            ObjectiveKind::Ackley => format!("ackley:{}", self.dim),
            ObjectiveKind::Michalewicz => format!("michalewicz:{}", self.dim),
            ObjectiveKind::Levy => format!("levy:{}", self.dim),
            ObjectiveKind::Quadratic => format!("quadratic:{}", self.dim),
        }
    }

    pub fn to_native(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter().zip(self.lower.iter().zip(&self.upper)).map(|(&u, (&lo, &hi))| lo + u * (hi - lo)).collect()
    }

    pub fn to_unit(&self, native: &[f64]) -> Vec<f64> {
        native.iter().zip(self.lower.iter().zip(&self.upper)).map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo)).collect()
    }

    pub fn evaluate_native(&self, x: &[f64]) -> f64 {
        match self.kind {
            ObjectiveKind::Hartmann6 => hartmann6(x),
            ObjectiveKind::Ackley => ackley(x),
            ObjectiveKind::Michalewicz => michalewicz(x),
            ObjectiveKind::Levy => levy(x),
            ObjectiveKind::Quadratic => x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum(),
        }
    }

    /// Objective value at a unit-cube point.
    pub fn evaluate(&self, unit: &[f64]) -> f64 {
        self.evaluate_native(&self.to_native(unit))
    }

    /// Unit-cube minimizer, when known.
    pub fn argmin_unit(&self) -> Option<Vec<f64>> {
        self.argmin.as_ref().map(|a| self.to_unit(a))
    }
}

impl FromStr for Objective {
    type Err = Error;

    /// Parses `hartmann6`, `ackley:D`, `michalewicz:D`, `levy:D` or
    /// `quadratic:D`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName { kind: "objective", name: s.to_owned() };
        let (base, dim) = match s.split_once(':') {
            Some((b, d)) => (b, Some(d.parse::<usize>().map_err(|_| unknown())?)),
            None => (s, None),
        };
        let kind = match base {
            "hartmann6" => ObjectiveKind::Hartmann6,
            "ackley" => ObjectiveKind::Ackley,
            "michalewicz" => ObjectiveKind::Michalewicz,
            "levy" => ObjectiveKind::Levy,
            "quadratic" => ObjectiveKind::Quadratic,
            _ => return Err(unknown()),
        };
        let dim = match (kind, dim) {
            (ObjectiveKind::Hartmann6, None | Some(6)) => 6,
            (ObjectiveKind::Hartmann6, Some(_)) | (_, None) => return Err(unknown()),
            (_, Some(d)) => d,
        };
        Objective::new(kind, dim)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn hartmann6(x: &[f64]) -> f64 {
    -HARTMANN_ALPHA
        .iter()
        .zip(HARTMANN_A.iter().zip(&HARTMANN_P))
        .map(|(&alpha, (a, p))| {
            let inner: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
            alpha * (-inner).exp()
        })
        .sum::<f64>()
}

/// Ackley with `a = 20`, `b = 0.2`, `c = 2π`. Written with `expm1` so the
/// value at the origin is exactly zero.
pub fn ackley(x: &[f64]) -> f64 {
    let (a, b, c) = (20.0, 0.2, 2.0 * PI);
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cos = x.iter().map(|v| (c * v).cos()).sum::<f64>() / n;
    -a * (-b * sq.sqrt()).exp_m1() - E * (cos - 1.0).exp_m1()
}

pub fn michalewicz(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(i, &v)| michalewicz_term(i + 1, v)).sum()
}

fn michalewicz_term(index: usize, v: f64) -> f64 {
    -v.sin() * ((index as f64) * v * v / PI).sin().powi(2 * MICHALEWICZ_STEEPNESS)
}

/// Minimizer of one Michalewicz coordinate term on `[0, π]`: grid scan then
/// golden-section refinement around the best cell.
fn michalewicz_coordinate_argmin(index: usize) -> f64 {
    let n = 20_000;
    let h = PI / n as f64;
    let best = (0..=n).min_by(|&a, &b| michalewicz_term(index, a as f64 * h).total_cmp(&michalewicz_term(index, b as f64 * h))).unwrap_or(0);
    let (mut lo, mut hi) = (((best as f64) - 1.0).max(0.0) * h, ((best as f64) + 1.0).min(n as f64) * h);
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - ratio * (hi - lo);
        let m2 = lo + ratio * (hi - lo);
        if michalewicz_term(index, m1) < michalewicz_term(index, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    0.5 * (lo + hi)
}

/// Levy function; `sin²(π w₁)` is evaluated as `sin²(π (w₁ - 1))` so the
/// minimizer gives exactly zero.
pub fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let first = (PI * (w[0] - 1.0)).sin().powi(2);
    let middle: f64 = w[..d - 1].iter().map(|&wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))).sum();
    let wd = w[d - 1];
    let last = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * (wd - 1.0)).sin().powi(2));
    first + middle + last
}

/// With probability `p`, replaces `y` by a pessimistic outlier: the worst
/// value in `history` plus three times its range (at least 1). Always
/// consumes exactly one uniform draw.
pub fn inject_outliers(y: f64, p: f64, rng: &mut RngState, history: &[f64]) -> (f64, bool) {
    let u: f64 = rng.uniform();
    if u >= p {
        return (y, false);
    }
    let (lo, hi) = history.iter().chain(std::iter::once(&y)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = (hi - lo).max(1.0);
    (hi + 3.0 * range, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names() {
        for name in ["hartmann6", "ackley:8", "michalewicz:10", "levy:16", "quadratic:3"] {
            let obj: Objective = name.parse().unwrap();
            assert_eq!(obj.name(), name);
        }
        assert!("rosenbrock:2".parse::<Objective>().is_err());
        assert!("ackley".parse::<Objective>().is_err());
        assert!("hartmann6:5".parse::<Objective>().is_err());
    }

    #[test]
    fn exact_zero_minima() {
        let ackley8: Objective = "ackley:8".parse().unwrap();
        assert_eq!(ackley8.evaluate_native(&[0.0; 8]), 0.0);
        assert_eq!(ackley8.evaluate(&[0.5; 8]), 0.0);
        let levy16: Objective = "levy:16".parse().unwrap();
        assert_eq!(levy16.evaluate_native(&[1.0; 16]), 0.0);
    }

    #[test]
    fn hartmann_minimum() {
        let h: Objective = "hartmann6".parse().unwrap();
        assert!((h.evaluate_native(&HARTMANN_ARGMIN) - HARTMANN_MIN).abs() < 1e-4);
    }

    #[test]
    fn ackley_reference_value() {
        // At x = (1, ..., 1): -20 e^{-0.2} - e^{cos 2π} + 20 + e = 20(1 - e^{-0.2}).
        let v = ackley(&[1.0; 4]);
        assert!((v - 20.0 * (1.0 - (-0.2_f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn evaluation_is_pure() {
        let m: Objective = "michalewicz:10".parse().unwrap();
        let p = [0.13, 0.77, 0.5, 0.01, 0.99, 0.42, 0.3, 0.6, 0.2, 0.9];
        assert_eq!(m.evaluate(&p).to_bits(), m.evaluate(&p).to_bits());
    }

    #[test]
    fn minimum_beats_random_points() {
        let mut rng = RngState::new(4);
        for name in ["hartmann6", "ackley:8", "michalewicz:10", "levy:16", "quadratic:2"] {
            let obj: Objective = name.parse().unwrap();
            assert!((obj.evaluate(&obj.argmin_unit().unwrap()) - obj.f_opt).abs() < 1e-4, "{name}");
            for _ in 0..200 {
                let u: Vec<f64> = (0..obj.dim).map(|_| rng.uniform()).collect();
                assert!(obj.evaluate(&u) >= obj.f_opt - 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn outlier_switch() {
        let mut rng = RngState::new(1);
        for _ in 0..100 {
            assert_eq!(inject_outliers(2.5, 0.0, &mut rng, &[1.0, 3.0]), (2.5, false));
        }
        for _ in 0..100 {
            let (v, c) = inject_outliers(2.5, 1.0, &mut rng, &[1.0, 3.0]);
            assert!(c);
            assert_eq!(v, 3.0 + 3.0 * 2.0);
        }
        let (v, _) = inject_outliers(0.2, 1.0, &mut rng, &[0.1, 0.3]);
        assert!((v - 3.3).abs() < 1e-12);
        let n = 10_000;
        let hits = (0..n).filter(|_| inject_outliers(0.0, 0.2, &mut rng, &[]).1).count();
        assert!(((hits as f64) / n as f64 - 0.2).abs() <= 0.012);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn unit_native_round_trip(v in proptest::collection::vec(-32.768f64..32.768, 8)) {
                let obj: Objective = "ackley:8".parse().unwrap();
                let back = obj.to_native(&obj.to_unit(&v));
                for (a, b) in v.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
