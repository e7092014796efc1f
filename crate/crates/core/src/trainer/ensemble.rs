use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::method::Method;
use crate::predictors::Ensemble;
use crate::rng::{stream, stream_id};
use crate::trainer::config::TrainConfig;
use crate::trainer::run::{train_method, TrainHistory};
use rand::seq::index::sample;
use rayon::prelude::*;

fn member_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(1_000_003u64.wrapping_mul(index as u64 + 1))
}

/// Trains `k_pool` independent HNN runs with distinct derived seeds and
/// assembles a seeded uniform random subset of `k_members` of them.
/// Members are independent, so the parallel mode changes wall time only.
pub fn train_ensemble(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
) -> Result<(Ensemble<f64>, Vec<TrainHistory>)> {
    if cfg.method != Method::De {
        return Err(Error::config("train_ensemble requires the de method"));
    }
    cfg.validate()?;
    let member_cfgs: Vec<TrainConfig> = (0..cfg.k_pool)
        .map(|i| TrainConfig {
            method: Method::Hnn,
            seed: member_seed(cfg.seed, i),
            ..cfg.clone()
        })
        .collect();
    let pool: Vec<_> = if cfg.parallel_ensemble {
        member_cfgs
            .par_iter()
            .map(|mc| train_method(bundle, mc))
            .collect::<Result<Vec<_>>>()?
    } else {
        member_cfgs
            .iter()
            .map(|mc| train_method(bundle, mc))
            .collect::<Result<Vec<_>>>()?
    };

    let mut subset_rng = stream(cfg.subset_seed.unwrap_or(cfg.seed), stream_id::ENSEMBLE_SUBSET);
    let mut chosen: Vec<usize> = sample(&mut subset_rng, cfg.k_pool, cfg.k_members).into_vec();
    chosen.sort_unstable();

    let mut members = Vec::with_capacity(cfg.k_members);
    let mut member_seeds = Vec::with_capacity(cfg.k_members);
    let mut histories = Vec::with_capacity(cfg.k_pool);
    for (i, (model, history)) in pool.into_iter().enumerate() {
        if chosen.contains(&i) {
            members.push(model);
            member_seeds.push(member_seed(cfg.seed, i));
        }
        histories.push(history);
    }
    Ok((
        Ensemble {
            members,
            member_seeds,
        },
        histories,
    ))
}
