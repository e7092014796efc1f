use crate::error::{Error, Result};
use crate::method::Method;
use crate::objectives::{KlMode, Weighting};
use serde::{Deserialize, Serialize};

/// Everything one training run needs. `for_method` fills in the published
/// per-method defaults (tuned on the full-scale benchmark); `desk` scales
/// the epoch budget down for laptop runs, shrinking patience
/// proportionally.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub pretrain_epochs: usize,
    /// Posterior draws per training step (BNN).
    pub n_mc_train: usize,
    /// Posterior draws for the validation loss (BNN/MCD).
    pub n_mc_valid: usize,
    /// Prior scale of the weight-space Gaussian (BNN).
    pub prior_scale: f64,
    /// Initial posterior scale (BNN): rho = softplus⁻¹(q_scale).
    pub q_scale: f64,
    /// Drop probability (MCD).
    pub dropout_p: f64,
    /// L2 weight penalty (MCD).
    pub lambda: f64,
    pub weighting: Weighting,
    pub kl_mode: KlMode,
    /// Independently trained models in the pool (DE).
    pub k_pool: usize,
    /// Members drawn from the pool (DE).
    pub k_members: usize,
    /// Seed of the member-subset draw; defaults to the run seed.
    pub subset_seed: Option<u64>,
    /// Train pool members on worker threads (DE).
    pub parallel_ensemble: bool,
}

const PAPER_MAX_EPOCHS: usize = 500;

impl TrainConfig {
    pub fn for_method(method: Method, seed: u64) -> Self {
        let base = TrainConfig {
            method,
            seed,
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            batch_size: 100,
            max_epochs: PAPER_MAX_EPOCHS,
            patience: 50,
            pretrain_epochs: 0,
            n_mc_train: 1,
            n_mc_valid: 20,
            prior_scale: 0.1,
            q_scale: 0.001,
            dropout_p: 0.2,
            lambda: 1e-5,
            weighting: Weighting::Geometric,
            kl_mode: KlMode::ClosedForm,
            k_pool: 10,
            k_members: 5,
            subset_seed: None,
            parallel_ensemble: false,
        };
        match method {
            Method::Hnn | Method::De => TrainConfig {
                learning_rate: 0.001574,
                batch_size: 250,
                patience: 50,
                ..base
            },
            Method::Mcd => TrainConfig {
                learning_rate: 0.000772,
                batch_size: 100,
                patience: 50,
                dropout_p: 0.241437,
                ..base
            },
            // The naive sampler has no published tuning; it borrows the LRT
            // values as the closest Gaussian-sampler configuration.
            Method::BnnLrt | Method::BnnNaive => TrainConfig {
                learning_rate: 0.000857,
                batch_size: 100,
                patience: 20,
                pretrain_epochs: 5,
                n_mc_train: 1,
                prior_scale: 0.138793,
                q_scale: 0.001351,
                ..base
            },
            Method::BnnFo => TrainConfig {
                learning_rate: 0.000948,
                batch_size: 100,
                patience: 20,
                pretrain_epochs: 5,
                n_mc_train: 2,
                prior_scale: 0.198768,
                q_scale: 0.000214,
                ..base
            },
            Method::BnnRad => TrainConfig {
                learning_rate: 0.000956,
                batch_size: 100,
                patience: 20,
                pretrain_epochs: 5,
                n_mc_train: 1,
                prior_scale: 0.092516,
                q_scale: 0.001241,
                ..base
            },
        }
    }

    /// Patience scaled proportionally to a reduced epoch budget, floored at 3.
    pub fn scaled_patience(paper_patience: usize, max_epochs: usize) -> usize {
        ((paper_patience * max_epochs + PAPER_MAX_EPOCHS - 1) / PAPER_MAX_EPOCHS).max(3)
    }

    /// Desk-scale budget: same published hyperparameters, fewer epochs.
    pub fn desk(method: Method, seed: u64) -> Self {
        let mut cfg = Self::for_method(method, seed);
        let max_epochs = 60;
        cfg.patience = Self::scaled_patience(cfg.patience, max_epochs);
        cfg.max_epochs = max_epochs;
        cfg.k_pool = 6;
        cfg.k_members = 4;
        cfg.parallel_ensemble = true;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch_size and max_epochs must be >= 1"));
        }
        if self.n_mc_train == 0 || self.n_mc_valid == 0 {
            return Err(Error::config("MC sample counts must be >= 1"));
        }
        if self.method.is_bnn() && (self.prior_scale <= 0.0 || self.q_scale <= 0.0) {
            return Err(Error::config("prior_scale and q_scale must be positive"));
        }
        if self.method == Method::Mcd && !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p must be in [0, 1)"));
        }
        if self.lambda < 0.0 {
            return Err(Error::config("lambda must be >= 0"));
        }
        if self.method == Method::De && (self.k_pool == 0 || self.k_members > self.k_pool) {
            return Err(Error::config(
                "ensemble needs k_pool >= 1 and k_members <= k_pool",
            ));
        }
        Ok(())
    }
}
