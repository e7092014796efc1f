use crate::autodiff::{Tape, Tensor};
use crate::data::{DatasetBundle, Split, WindowSet};
use crate::error::{Error, Result};
use crate::layers::{FunctionalModel, NoiseBundle, SamplerKind};
use crate::method::Method;
use crate::objectives::{
    elbo_estimate, gaussian_nll, kl_diag_gaussians, kl_radial_mc, mcd_objective, ElboConfig,
    RadialDraw,
};
use crate::rng::{stream, stream_id, Stream};
use crate::trainer::adam::AdamState;
use crate::trainer::config::TrainConfig;
use rand::seq::SliceRandom;
use std::time::Instant;

const EVAL_BATCH: usize = 1024;

/// Per-epoch record of one training run. Wall time is informational only
/// and never serialized, so emitted artifacts stay byte-reproducible.
#[derive(Clone, Debug)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// Index of the epoch whose parameters were restored.
    pub best_epoch: usize,
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.valid_loss.len()
    }

    pub fn best_valid_loss(&self) -> f64 {
        self.valid_loss[self.best_epoch]
    }
}

fn gather(ws: &WindowSet, rows: &[usize]) -> (Tensor<f64>, Tensor<f64>) {
    let mut x = Vec::with_capacity(rows.len() * ws.dim);
    let mut y = Vec::with_capacity(rows.len());
    for &r in rows {
        x.extend_from_slice(ws.row(r));
        y.push(ws.rul[r]);
    }
    (
        Tensor::new(vec![rows.len(), ws.dim], x).expect("consistent dims"),
        Tensor::new(vec![rows.len(), 1], y).expect("consistent dims"),
    )
}

/// Seeded model construction for a method tag.
pub fn build_model(cfg: &TrainConfig, input_dim: usize) -> Result<FunctionalModel<f64>> {
    let mut rng = stream(cfg.seed, stream_id::PARAM_INIT);
    match cfg.method {
        Method::Hnn => FunctionalModel::hnn(input_dim, &cfg.hidden, &mut rng),
        Method::Mcd => FunctionalModel::mcd(input_dim, &cfg.hidden, cfg.dropout_p, &mut rng),
        Method::BnnNaive | Method::BnnLrt | Method::BnnFo | Method::BnnRad => {
            FunctionalModel::bnn(
                input_dim,
                &cfg.hidden,
                cfg.method.sampler().expect("bnn method"),
                cfg.prior_scale,
                cfg.q_scale,
                &mut rng,
            )
        }
        Method::De => Err(Error::config(
            "deep ensembles are trained via train_ensemble",
        )),
    }
}

/// Deterministic pretraining of the mean path: the collapsed mu-model is
/// trained with an RMSE loss for `epochs`, then its affine parameters are
/// copied back into the variational means. Rho is untouched.
pub fn pretrain_functional(
    model: &mut FunctionalModel<f64>,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    let ws = bundle.split(Split::Train);
    let mut mu_model = model.to_mu_model()?;
    let sizes: Vec<usize> = mu_model.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(&sizes, cfg.learning_rate)?;
    let mut shuffle_rng = stream(cfg.seed, stream_id::PRETRAIN_SHUFFLE);
    let mut noise_rng = stream(cfg.seed, stream_id::PRETRAIN_NOISE);
    let mut order: Vec<usize> = (0..ws.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = gather(ws, chunk);
            let mut tape: Tape<f64> = Tape::new();
            let bound = mu_model.bind(&mut tape, true);
            let xv = tape.leaf(&x);
            let yv = tape.leaf(&y);
            let noise = if mu_model.is_stochastic() {
                mu_model.sample_noise(chunk.len(), &mut noise_rng)
            } else {
                mu_model.empty_noise()
            };
            let (mu, _) = mu_model.forward(&mut tape, &bound, xv, &noise)?;
            let diff = tape.sub(yv, mu)?;
            let sq = tape.square(diff)?;
            let mse = tape.mean(sq)?;
            let loss = tape.sqrt(mse)?;
            if !tape.scalar_value(loss)?.is_finite() {
                return Err(Error::numeric("non-finite pretraining loss"));
            }
            tape.backward(loss)?;
            let vars = mu_model.param_vars(&bound);
            let grads: Vec<Vec<f64>> = vars
                .iter()
                .zip(&sizes)
                .map(|(v, &n)| tape.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; n]))
                .collect();
            let mut params = mu_model.params_mut();
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            adam.step(&mut params, &grad_refs)?;
        }
    }
    model.adopt_mu_from(&mu_model)
}

fn step_loss(
    model: &FunctionalModel<f64>,
    cfg: &TrainConfig,
    x: &Tensor<f64>,
    y: &Tensor<f64>,
    batch_index: usize,
    minibatch_count: usize,
    noise_rng: &mut Stream,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let batch = x.shape()[0];
    let mut tape: Tape<f64> = Tape::new();
    let bound = model.bind(&mut tape, true);
    let xv = tape.leaf(x);
    let yv = tape.leaf(y);
    let loss = match cfg.method {
        Method::Hnn => {
            let (mu, var) = model.forward(&mut tape, &bound, xv, &model.empty_noise())?;
            gaussian_nll(&mut tape, yv, mu, var)?
        }
        Method::Mcd => {
            let noise = model.sample_noise(batch, noise_rng);
            mcd_objective(&mut tape, model, &bound, xv, yv, cfg.lambda, &noise)?
        }
        _ => {
            let bundles: Vec<NoiseBundle<f64>> = (0..cfg.n_mc_train)
                .map(|_| model.sample_noise(batch, noise_rng))
                .collect();
            let mut ecfg = ElboConfig::new(cfg.n_mc_train, minibatch_count)?;
            ecfg.weighting = cfg.weighting;
            ecfg.kl_mode = cfg.kl_mode;
            elbo_estimate(&mut tape, model, &bound, xv, yv, batch_index, &ecfg, &bundles)?.loss
        }
    };
    let value = tape.scalar_value(loss)?;
    tape.backward(loss)?;
    let vars = model.param_vars(&bound);
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| {
            tape.grad(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(*v).len()])
        })
        .collect();
    Ok((value, grads))
}

/// Validation loss matching the training objective family: deterministic
/// NLL for HNN, mask-averaged NLL for MCD, and the unweighted ELBO
/// (KL + summed NLL, draw-averaged) for BNNs.
pub fn validation_loss(
    model: &FunctionalModel<f64>,
    ws: &WindowSet,
    cfg: &TrainConfig,
    rng: &mut Stream,
) -> Result<f64> {
    if ws.is_empty() {
        return Err(Error::data("validation split is empty"));
    }
    let rows: Vec<usize> = (0..ws.len()).collect();
    match cfg.method {
        Method::Hnn => {
            let mut total = 0.0;
            for chunk in rows.chunks(EVAL_BATCH) {
                total += batch_nll_sum(model, ws, chunk, &model.empty_noise())?;
            }
            Ok(total / ws.len() as f64)
        }
        Method::Mcd => {
            let mut total = 0.0;
            for _ in 0..cfg.n_mc_valid {
                for chunk in rows.chunks(EVAL_BATCH) {
                    let noise = model.sample_noise(chunk.len(), rng);
                    total += batch_nll_sum(model, ws, chunk, &noise)?;
                }
            }
            Ok(total / (ws.len() * cfg.n_mc_valid) as f64)
        }
        _ => {
            let kl = model_kl_total(model, cfg, rng)?;
            let mut data = 0.0;
            for _ in 0..cfg.n_mc_valid {
                for chunk in rows.chunks(EVAL_BATCH) {
                    let noise = model.sample_noise(chunk.len(), rng);
                    data += batch_nll_sum(model, ws, chunk, &noise)?;
                }
            }
            Ok(kl + data / cfg.n_mc_valid as f64)
        }
    }
}

fn batch_nll_sum(
    model: &FunctionalModel<f64>,
    ws: &WindowSet,
    rows: &[usize],
    noise: &NoiseBundle<f64>,
) -> Result<f64> {
    let (x, y) = gather(ws, rows);
    let mut tape: Tape<f64> = Tape::new();
    let bound = model.bind(&mut tape, false);
    let xv = tape.leaf(&x);
    let yv = tape.leaf(&y);
    let (mu, var) = model.forward(&mut tape, &bound, xv, noise)?;
    let nll = gaussian_nll(&mut tape, yv, mu, var)?;
    Ok(tape.scalar_value(nll)? * rows.len() as f64)
}

/// Total KL across variational layers (closed form; MC for radial).
fn model_kl_total(model: &FunctionalModel<f64>, cfg: &TrainConfig, rng: &mut Stream) -> Result<f64> {
    let mut tape: Tape<f64> = Tape::new();
    let bound = model.bind(&mut tape, false);
    let mut total = 0.0;
    for (_, layer, vars) in model.variational_slots(&bound) {
        let kl = if layer.sampler() == SamplerKind::Radial {
            let draws: Vec<RadialDraw<f64>> = (0..cfg.n_mc_valid)
                .map(|_| RadialDraw::sample(layer, rng))
                .collect();
            kl_radial_mc(&mut tape, layer, vars, &draws)?
        } else {
            let sw = tape.softplus(vars.rho_w)?;
            let klw = kl_diag_gaussians(&mut tape, vars.mu_w, sw, layer.prior_scale())?;
            let sb = tape.softplus(vars.rho_b)?;
            let klb = kl_diag_gaussians(&mut tape, vars.mu_b, sb, layer.prior_scale())?;
            tape.add(klw, klb)?
        };
        total += tape.scalar_value(kl)?;
    }
    Ok(total)
}

/// Minibatch training with per-epoch shuffling, position-indexed KL weights,
/// early stopping on the validation loss, and best-checkpoint restoration.
/// Fully deterministic given (seed, config, dataset).
pub fn train(
    model: &mut FunctionalModel<f64>,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    let started = Instant::now();
    let train_ws = bundle.split(Split::Train);
    let valid_ws = bundle.split(Split::Valid);
    if train_ws.is_empty() || valid_ws.is_empty() {
        return Err(Error::data("train and validation splits must be non-empty"));
    }
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(&sizes, cfg.learning_rate)?;
    let mut shuffle_rng = stream(cfg.seed, stream_id::SHUFFLE);
    let mut noise_rng = stream(cfg.seed, stream_id::TRAIN_NOISE);
    let mut valid_rng = stream(cfg.seed, stream_id::VALID_NOISE);

    let mut order: Vec<usize> = (0..train_ws.len()).collect();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        best_epoch: 0,
        wall_time_secs: 0.0,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_params: Vec<Vec<f64>> = Vec::new();
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let minibatch_count = order.chunks(cfg.batch_size).count();
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = gather(train_ws, chunk);
            let (value, grads) =
                step_loss(model, cfg, &x, &y, bi, minibatch_count, &mut noise_rng).map_err(
                    |e| Error::numeric(format!("epoch {epoch} batch {bi}: {e}")),
                )?;
            if !value.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch} batch {bi}"
                )));
            }
            epoch_loss += value;
            let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            let mut params = model.params_mut();
            adam.step(&mut params, &grad_refs)
                .map_err(|e| Error::numeric(format!("epoch {epoch} batch {bi}: {e}")))?;
        }
        history.train_loss.push(epoch_loss / minibatch_count as f64);
        let valid = validation_loss(model, valid_ws, cfg, &mut valid_rng)?;
        if !valid.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.valid_loss.push(valid);
        if valid < best_loss {
            best_loss = valid;
            history.best_epoch = epoch;
            best_params = model.params().iter().map(|p| p.data().to_vec()).collect();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    if !best_params.is_empty() {
        for (p, best) in model.params_mut().into_iter().zip(&best_params) {
            p.data_mut().copy_from_slice(best);
        }
    }
    history.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(history)
}

/// Builds, scales, pretrains and trains one model for `cfg.method`.
pub fn train_method(
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
) -> Result<(FunctionalModel<f64>, TrainHistory)> {
    cfg.validate()?;
    let mut model = build_model(cfg, bundle.feature_dim())?;
    let labels = &bundle.split(Split::Train).rul;
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let std = (labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n)
        .sqrt()
        .max(1e-9);
    model.set_target_affine(mean, std)?;
    pretrain_functional(&mut model, bundle, cfg, cfg.pretrain_epochs)?;
    let history = train(&mut model, bundle, cfg)?;
    Ok((model, history))
}
