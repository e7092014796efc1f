//! Desk-scale uncertainty quantification for run-to-failure prognostics.
//!
//! The crate bundles a small reverse-mode autodiff engine, deterministic and
//! stochastic (variational, dropout) layers, the training objectives and
//! loops for seven predictive-uncertainty methods, a seeded synthetic
//! run-to-failure data generator, and the evaluation metrics for accuracy,
//! calibration, sharpness and epistemic/aleatoric decomposition.
//!
//! All numeric modules are generic over [`scalar::Real`] (`f32`/`f64`); the
//! `*64` aliases below are what the pipeline and CLI use.

pub mod autodiff;
pub mod data;
pub mod layers;
pub mod objectives;
pub mod predictors;
pub mod trainer;
pub mod method;
pub mod metrics;
pub mod error;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape64 = autodiff::Tape<f64>;
