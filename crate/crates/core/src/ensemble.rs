//! Weighted aggregation across surrogate models with a tempered,
//! floored exponential weight update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

pub const LOG_SCORE_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub tau: f64,
    pub floor: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { tau: 1.0, floor: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState<T> {
    weights: Vec<T>,
    tau: T,
    floor: T,
    last_log_scores: Option<Vec<T>>,
}

impl<T: Scalar> EnsembleState<T> {
    /// Uniform weights over `models` members.
    pub fn uniform(models: usize, cfg: &EnsembleConfig) -> Result<Self> {
        if models == 0 {
            return Err(Error::InvalidConfig("an ensemble needs at least one model".into()));
        }
        Self::with_weights(vec![T::one() / T::from_count(models); models], cfg)
    }

    pub fn with_weights(weights: Vec<T>, cfg: &EnsembleConfig) -> Result<Self> {
        let m = weights.len();
        if !(cfg.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {}", cfg.tau)));
        }
        if !(cfg.floor > 0.0 && cfg.floor < 1.0 / m as f64) {
            return Err(Error::InvalidConfig(format!("weight floor must lie in (0, 1/{m}), got {}", cfg.floor)));
        }
        if weights.iter().any(|w| !(*w >= T::zero())) || (compensated_sum(weights.iter().copied()) - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::InvalidConfig("weights must be a probability vector".into()));
        }
        Ok(Self { weights, tau: T::lit(cfg.tau), floor: T::lit(cfg.floor), last_log_scores: None })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn last_log_scores(&self) -> Option<&[T]> {
        self.last_log_scores.as_deref()
    }

    /// Smallest weight any update can produce.
    pub fn weight_lower_bound(&self) -> T {
        let m = T::from_count(self.len());
        self.floor / (T::one() + m * self.floor)
    }

    /// `π'_m ∝ max(δ, π_m·exp(ℓ_m/τ))`. Log scores are clamped to
    /// `[-50, 50]` (non-finite ones to the lower end) and shifted by their
    /// maximum before exponentiation.
    pub fn update(&mut self, log_scores: &[T]) -> Result<()> {
        if log_scores.len() != self.len() {
            return Err(Error::LengthMismatch { left: self.len(), right: log_scores.len() });
        }
        let clamp = T::lit(LOG_SCORE_CLAMP);
        let scaled: Vec<T> = log_scores
            .iter()
            .map(|&l| if l.is_nan() { -clamp } else { l.max(-clamp).min(clamp) } / self.tau)
            .collect();
        let top = scaled.iter().copied().fold(T::neg_infinity(), T::max);
        let raw: Vec<T> = self.weights.iter().zip(&scaled).map(|(&w, &s)| (w * (s - top).exp()).max(self.floor)).collect();
        let total = compensated_sum(raw.iter().copied());
        self.weights = raw.into_iter().map(|w| w / total).collect();
        self.last_log_scores = Some(log_scores.to_vec());
        Ok(())
    }
}

/// `Σ_m π_m·value_m`.
pub fn aggregate<T: Scalar>(values: &[T], weights: &[T]) -> Result<T> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch { left: values.len(), right: weights.len() });
    }
    Ok(values.iter().zip(weights).fold(T::zero(), |acc, (&v, &w)| acc + w * v))
}

pub fn update_weights<T: Scalar>(state: &EnsembleState<T>, log_scores: &[T]) -> Result<EnsembleState<T>> {
    let mut next = state.clone();
    next.update(log_scores)?;
    Ok(next)
}

/// Shannon entropy in nats; zero weights contribute nothing.
pub fn entropy<T: Scalar>(weights: &[T]) -> T {
    -weights.iter().filter(|&&w| w > T::zero()).fold(T::zero(), |acc, &w| acc + w * w.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rng::RngState;
    use proptest::prelude::*;

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[2.5], &[1.0]).unwrap(), 2.5);
        assert_eq!(aggregate(&[1.0, 3.0], &[0.5, 0.5]).unwrap(), 2.0);
        assert_eq!(aggregate(&[4.0, 0.0], &[0.25, 0.75]).unwrap(), 1.0);
        assert_eq!(aggregate(&[4.0, 7.0, -1.0], &[0.0, 1.0, 0.0]).unwrap(), 7.0);
        assert!(matches!(aggregate(&[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn worked_two_model_update() {
        let state = EnsembleState::<f64>::uniform(2, &EnsembleConfig::default()).unwrap();
        let next = update_weights(&state, &[3.0_f64.ln(), 0.0]).unwrap();
        assert!((next.weights()[0] - 0.75).abs() < 1e-12);
        assert!((next.weights()[1] - 0.25).abs() < 1e-12);
        assert_eq!(next.last_log_scores().unwrap()[1], 0.0);
    }

    #[test]
    fn equal_scores_leave_weights() {
        let cfg = EnsembleConfig::default();
        let mut state = EnsembleState::with_weights(vec![0.2, 0.3, 0.5], &cfg).unwrap();
        state.update(&[-4.2, -4.2, -4.2]).unwrap();
        for (w, want) in state.weights().iter().zip([0.2_f64, 0.3, 0.5]) {
            assert!((w - want).abs() < 1e-15);
        }
    }

    #[test]
    fn dominated_model_hits_floor() {
        let cfg = EnsembleConfig::default();
        let mut state = EnsembleState::<f64>::uniform(2, &cfg).unwrap();
        for _ in 0..200 {
            state.update(&[0.0, -30.0]).unwrap();
        }
        let bound = state.weight_lower_bound();
        assert!(state.weights()[1] >= bound && state.weights()[1] > 0.0);
        // Fixed point of x = δ / (1 - x + δ) below one is x = δ.
        assert!((state.weights()[1] - 0.001).abs() < 1e-12);
        assert!(entropy(state.weights()) > 0.0);
    }

    #[test]
    fn extreme_scores_are_clamped() {
        let cfg = EnsembleConfig::default();
        let mut state = EnsembleState::<f64>::uniform(3, &cfg).unwrap();
        state.update(&[f64::INFINITY, f64::NAN, -1e300]).unwrap();
        assert!(state.weights().iter().all(|w| w.is_finite()));
        assert!((state.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1.0]), 0.0);
        assert!((entropy(&[1.0 / 3.0; 3]) - 3.0_f64.ln()).abs() < 1e-12);
        let d = 0.001;
        assert!(entropy(&[1.0 - 2.0 * d, d, d]) > 0.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(EnsembleState::<f64>::uniform(0, &EnsembleConfig::default()).is_err());
        assert!(EnsembleState::<f64>::uniform(2, &EnsembleConfig { tau: 0.0, floor: 0.001 }).is_err());
        assert!(EnsembleState::<f64>::uniform(4, &EnsembleConfig { tau: 1.0, floor: 0.25 }).is_err());
        assert!(EnsembleState::with_weights(vec![0.7, 0.7], &EnsembleConfig::default()).is_err());
    }

    #[test]
    fn random_sequences_respect_floor() {
        let cfg = EnsembleConfig::default();
        let mut rng = RngState::new(17);
        for _ in 0..1000 {
            let m = 2 + rng.below(4);
            let mut state = EnsembleState::<f64>::uniform(m, &cfg).unwrap();
            for _ in 0..20 {
                let scores: Vec<f64> = (0..m).map(|_| 80.0 * (rng.uniform::<f64>() - 0.5)).collect();
                state.update(&scores).unwrap();
                assert!(state.weights().iter().all(|&w| w >= state.weight_lower_bound()));
                assert!((state.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn update_stays_on_simplex(
            scores in proptest::collection::vec(-200.0f64..200.0, 1..6),
            tau in 0.05f64..5.0,
        ) {
            let m = scores.len();
            let cfg = EnsembleConfig { tau, floor: 0.5 / (m as f64 + 1.0) };
            let mut state = EnsembleState::<f64>::uniform(m, &cfg).unwrap();
            state.update(&scores).unwrap();
            prop_assert!((state.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(state.weights().iter().all(|&w| w >= state.weight_lower_bound() * (1.0 - 1e-12)));
        }

        #[test]
        fn aggregate_is_linear(
            a in proptest::collection::vec(-10.0f64..10.0, 3),
            b in proptest::collection::vec(-10.0f64..10.0, 3),
            s in -3.0f64..3.0,
        ) {
            let w = [0.2, 0.5, 0.3];
            let mixed: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
            let lhs = aggregate(&mixed, &w).unwrap();
            let rhs = aggregate(&a, &w).unwrap() + s * aggregate(&b, &w).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
