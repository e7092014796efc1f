//! Optimization loop: Adam, minibatching with position-indexed KL weights,
//! optional deterministic pretraining of the means, early stopping with
//! best-checkpoint restoration, and seeded ensemble orchestration.

mod adam;
mod config;
mod ensemble;
mod run;

pub use adam::AdamState;
pub use config::TrainConfig;
pub use ensemble::train_ensemble;
pub use run::{build_model, pretrain_functional, train, train_method, validation_loss, TrainHistory};
