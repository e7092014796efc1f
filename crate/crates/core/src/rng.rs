//! Deterministic, splittable random streams.
//!
//! Every stochastic component takes a `Stream` derived from `(seed, stream
//! id)`. ChaCha streams with distinct ids are independent, so concurrent
//! consumers (ensemble members, predictive passes) never share state and
//! results do not depend on scheduling.

use crate::scalar::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Well-known stream ids; per-item streams offset from these bases.
pub mod stream_id {
    pub const DATA_UNIT_BASE: u64 = 1_000;
    pub const DATA_SPLIT: u64 = 1;
    pub const SENSOR_MODEL: u64 = 2;
    pub const UNIT_SPEC_BASE: u64 = 500;
    pub const PARAM_INIT: u64 = 10;
    pub const SHUFFLE: u64 = 11;
    pub const TRAIN_NOISE: u64 = 12;
    pub const PRETRAIN_SHUFFLE: u64 = 14;
    pub const PRETRAIN_NOISE: u64 = 15;
    pub const VALID_NOISE: u64 = 13;
    pub const PREDICT: u64 = 20;
    pub const ENSEMBLE_SUBSET: u64 = 30;
    pub const ENSEMBLE_MEMBER_BASE: u64 = 2_000;
}

pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `n` draws from N(0, 1).
pub fn normal_vec<F: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<F> {
    (0..n).map(|_| F::standard_normal(rng)).collect()
}

/// `n` draws uniform on {-1, +1}.
pub fn sign_vec<F: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<F> {
    (0..n)
        .map(|_| if rng.gen::<bool>() { F::one() } else { -F::one() })
        .collect()
}

/// `n` Bernoulli draws with P(1) = keep_prob, as 0/1 scalars.
pub fn bernoulli_vec<F: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, keep_prob: f64) -> Vec<F> {
    (0..n)
        .map(|_| {
            if rng.gen::<f64>() < keep_prob {
                F::one()
            } else {
                F::zero()
            }
        })
        .collect()
}
