//! Bayesian optimization with orthogonalized Monte Carlo acquisition
//! estimates.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! optimization loop and the experiment harness use.

pub mod acquisition;
pub mod benchmarks;
pub mod diagnostics;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod math;
pub mod scalar;
pub mod tpe;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = math::Matrix<f64>;
pub type ObservationSet = gp::ObservationSet<f64>;
pub type GpFit = gp::GpFit<f64>;
pub type ParamPosterior = gp::ParamPosterior<f64>;
pub type AcquisitionEstimate = acquisition::AcquisitionEstimate<f64>;
pub type TpeModel = tpe::TpeModel<f64>;
pub type BootstrapEnsemble = tpe::BootstrapEnsemble<f64>;
pub type EnsembleState = ensemble::EnsembleState<f64>;
