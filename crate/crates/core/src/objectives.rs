//! Training objectives: heteroscedastic Gaussian NLL, closed-form and
//! Monte Carlo KL terms, the minibatch-weighted ELBO estimator, and the
//! L2-regularized dropout objective.
//!
//! Every objective is a deterministic function of (parameters, batch,
//! frozen noise); stochasticity enters only through the explicit draws.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{radial_direction, BoundModel, FunctionalModel, NoiseBundle, SamplerKind};
use crate::layers::{LayerNoise, VariationalLinear, VariationalNoise, VariationalVars};
use crate::scalar::{real, Real};

/// How minibatch positions weight the KL term within an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `pi_i = 2^(M-i) / (2^M - 1)` — front-loads the complexity cost.
    Geometric,
    /// `pi_i = 1/M`, for ablation.
    Uniform,
}

/// How the KL term of the ELBO is computed for Gaussian samplers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlMode {
    /// Exact diagonal-Gaussian KL (lower variance); the default.
    ClosedForm,
    /// The sampled `log q(w) - log p(w)` ratio on the same forward draws.
    /// Only available for the naive sampler, which has explicit weight
    /// samples.
    Sampled,
}

/// ELBO estimator settings.
#[derive(Clone, Copy, Debug)]
pub struct ElboConfig {
    /// Posterior draws per step for the data term.
    pub n_mc_train: usize,
    /// Minibatch count per epoch (M in the weighting scheme).
    pub minibatch_count: usize,
    pub weighting: Weighting,
    pub kl_mode: KlMode,
}

impl ElboConfig {
    pub fn new(n_mc_train: usize, minibatch_count: usize) -> Result<Self> {
        if n_mc_train < 1 {
            return Err(Error::config("n_mc_train must be >= 1"));
        }
        if minibatch_count < 1 {
            return Err(Error::config("minibatch_count must be >= 1"));
        }
        Ok(ElboConfig {
            n_mc_train,
            minibatch_count,
            weighting: Weighting::Geometric,
            kl_mode: KlMode::ClosedForm,
        })
    }

    pub fn weight(&self, batch_index: usize) -> Result<f64> {
        let pis = match self.weighting {
            Weighting::Geometric => minibatch_weights(self.minibatch_count)?,
            Weighting::Uniform => {
                vec![1.0 / self.minibatch_count as f64; self.minibatch_count]
            }
        };
        pis.get(batch_index).copied().ok_or_else(|| {
            Error::config(format!(
                "batch index {batch_index} out of range for M = {}",
                self.minibatch_count
            ))
        })
    }
}

/// Geometric minibatch weights `pi_i = 2^(M-i) / (2^M - 1)`, i = 1..M.
/// They sum to one (exactly, as rationals).
pub fn minibatch_weights(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::config("minibatch count must be >= 1"));
    }
    if m > 1024 {
        return Err(Error::config("minibatch weighting capped at M = 1024"));
    }
    let denom = (2.0f64).powi(m as i32) - 1.0;
    Ok((1..=m)
        .map(|i| (2.0f64).powi((m - i) as i32) / denom)
        .collect())
}

/// Per-element heteroscedastic Gaussian NLL:
/// `0.5 ln sigma² + (y-mu)²/(2 sigma²) + 0.5 ln 2π` (constant included so
/// reported losses match the NLL metric).
pub fn gaussian_nll_terms<F: Real>(
    tape: &mut Tape<F>,
    y: Var,
    mu: Var,
    sigma_sq: Var,
) -> Result<Var> {
    if tape.value(sigma_sq).iter().any(|v| *v <= F::zero()) {
        return Err(Error::domain("gaussian_nll", "non-positive variance"));
    }
    if tape.value(y).is_empty() {
        return Err(Error::domain("gaussian_nll", "empty batch"));
    }
    let half = real::<F>(0.5);
    let diff = tape.sub(y, mu)?;
    let sq = tape.square(diff)?;
    let two_var = tape.scale(sigma_sq, real(2.0))?;
    let quad = tape.div(sq, two_var)?;
    let log_var = tape.log(sigma_sq)?;
    let half_log_var = tape.scale(log_var, half)?;
    let s = tape.add(quad, half_log_var)?;
    tape.add_scalar(s, real(0.5 * (2.0 * std::f64::consts::PI).ln()))
}

/// Batch-mean Gaussian NLL.
pub fn gaussian_nll<F: Real>(tape: &mut Tape<F>, y: Var, mu: Var, sigma_sq: Var) -> Result<Var> {
    let terms = gaussian_nll_terms(tape, y, mu, sigma_sq)?;
    tape.mean(terms)
}

/// Batch-sum Gaussian NLL (the ELBO's data term).
pub fn gaussian_nll_sum<F: Real>(
    tape: &mut Tape<F>,
    y: Var,
    mu: Var,
    sigma_sq: Var,
) -> Result<Var> {
    let terms = gaussian_nll_terms(tape, y, mu, sigma_sq)?;
    tape.sum(terms)
}

/// Closed-form `KL(q ‖ p)` between a diagonal Gaussian `N(mu, sigma²)` and
/// the isotropic prior `N(0, prior_scale²)`:
/// `sum_i [ ln(prior/sigma_i) + (sigma_i² + mu_i²)/(2 prior²) - 1/2 ]`.
pub fn kl_diag_gaussians<F: Real>(
    tape: &mut Tape<F>,
    mu: Var,
    sigma: Var,
    prior_scale: F,
) -> Result<Var> {
    if prior_scale <= F::zero() {
        return Err(Error::domain("kl_diag_gaussians", "prior_scale must be positive"));
    }
    if tape.value(sigma).iter().any(|v| *v <= F::zero()) {
        return Err(Error::domain("kl_diag_gaussians", "sigma must be positive"));
    }
    let p = prior_scale.as_f64();
    let sigma_sq = tape.square(sigma)?;
    let mu_sq = tape.square(mu)?;
    let ssum = tape.add(sigma_sq, mu_sq)?;
    let quad = tape.scale(ssum, real(1.0 / (2.0 * p * p)))?;
    let log_sigma = tape.log(sigma)?;
    let t = tape.sub(quad, log_sigma)?;
    let t = tape.add_scalar(t, real(p.ln() - 0.5))?;
    tape.sum(t)
}

/// One frozen radial draw for a layer (weight and bias directions/radii).
#[derive(Clone, Debug)]
pub struct RadialDraw<F: Real> {
    pub eps_w: Tensor<F>,
    pub r_w: F,
    pub eps_b: Tensor<F>,
    pub r_b: F,
}

impl<F: Real> RadialDraw<F> {
    pub fn sample<R: rand::Rng + ?Sized>(layer: &VariationalLinear<F>, rng: &mut R) -> Self {
        match VariationalNoise::sample(layer, 1, rng) {
            VariationalNoise::Radial {
                eps_w,
                r_w,
                eps_b,
                r_b,
            } => RadialDraw {
                eps_w,
                r_w,
                eps_b,
                r_b,
            },
            _ => unreachable!("radial layer samples radial noise"),
        }
    }
}

/// Entropy and cross-entropy parts of the Monte Carlo radial KL. The sum is
/// an estimate of `E_q[log q - log p]` up to an additive constant in the
/// optimized parameters; the entropy part is exactly `sum_i ln(prior/sigma_i)`
/// and the cross part averages `w²/(2 prior²)` over the frozen draws.
pub fn kl_radial_mc_parts<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    draws: &[RadialDraw<F>],
) -> Result<(Var, Var)> {
    if layer.sampler() != SamplerKind::Radial {
        return Err(Error::config("kl_radial_mc requires a radial layer"));
    }
    if draws.is_empty() {
        return Err(Error::config("kl_radial_mc needs at least one draw"));
    }
    let p = layer.prior_scale().as_f64();
    let dim = layer.weight_count() as f64;

    let sigma_w = tape.softplus(vars.rho_w)?;
    let sigma_b = tape.softplus(vars.rho_b)?;
    let log_sw = tape.log(sigma_w)?;
    let log_sb = tape.log(sigma_b)?;
    let sum_w = tape.sum(log_sw)?;
    let sum_b = tape.sum(log_sb)?;
    let neg_entropy = tape.add(sum_w, sum_b)?;
    let neg_entropy = tape.scale(neg_entropy, real(-1.0))?;
    let entropy_part = tape.add_scalar(neg_entropy, real(dim * p.ln()))?;

    let mut cross_total: Option<Var> = None;
    for d in draws {
        let dir_w = radial_direction(&d.eps_w, d.r_w)?;
        let dir_b = radial_direction(&d.eps_b, d.r_b)?;
        let dw = tape.leaf(&dir_w);
        let pw = tape.mul(sigma_w, dw)?;
        let w = tape.add(vars.mu_w, pw)?;
        let db = tape.leaf(&dir_b);
        let pb = tape.mul(sigma_b, db)?;
        let b = tape.add(vars.mu_b, pb)?;
        let w_sq = tape.square(w)?;
        let b_sq = tape.square(b)?;
        let sw = tape.sum(w_sq)?;
        let sb = tape.sum(b_sq)?;
        let s = tape.add(sw, sb)?;
        cross_total = Some(match cross_total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let cross = cross_total.expect("at least one draw");
    let cross = tape.scale(
        cross,
        real(1.0 / (2.0 * p * p * draws.len() as f64)),
    )?;
    let cross_part = tape.add_scalar(cross, real(-dim * 0.5))?;
    Ok((entropy_part, cross_part))
}

/// Monte Carlo KL for a radial layer; see [`kl_radial_mc_parts`].
pub fn kl_radial_mc<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    draws: &[RadialDraw<F>],
) -> Result<Var> {
    let (entropy, cross) = kl_radial_mc_parts(tape, layer, vars, draws)?;
    tape.add(entropy, cross)
}

/// The two addends of the estimated minibatch ELBO.
#[derive(Clone, Copy, Debug)]
pub struct ElboParts {
    pub loss: Var,
    /// `pi_i ·` total KL across variational layers.
    pub weighted_kl: Var,
    /// Draw-averaged batch-sum NLL.
    pub data: Var,
}

/// Minibatch ELBO estimate:
/// `pi_i · KL_total + (1/S) sum_s sum_batch NLL_s`, with the KL in closed
/// form for Gaussian samplers and by Monte Carlo (reusing the forward draws)
/// for radial layers. Gradients flow through the reparametrized draws.
pub fn elbo_estimate<F: Real>(
    tape: &mut Tape<F>,
    model: &FunctionalModel<F>,
    bound: &BoundModel,
    x: Var,
    y: Var,
    batch_index: usize,
    cfg: &ElboConfig,
    noise: &[NoiseBundle<F>],
) -> Result<ElboParts> {
    if tape.shape_of(x)[0] == 0 {
        return Err(Error::domain("elbo_estimate", "empty batch"));
    }
    if noise.len() != cfg.n_mc_train {
        return Err(Error::config(format!(
            "elbo needs {} noise bundles, got {}",
            cfg.n_mc_train,
            noise.len()
        )));
    }
    let slots = model.variational_slots(bound);
    if slots.is_empty() {
        return Err(Error::config("elbo requires at least one variational layer"));
    }

    let mut kl_total: Option<Var> = None;
    for (slot, layer, vars) in &slots {
        let kl_layer = match (layer.sampler(), cfg.kl_mode) {
            (SamplerKind::Radial, _) => {
                let draws: Vec<RadialDraw<F>> = noise
                    .iter()
                    .map(|bundle| match &bundle.slots[*slot] {
                        LayerNoise::Variational(VariationalNoise::Radial {
                            eps_w,
                            r_w,
                            eps_b,
                            r_b,
                        }) => Ok(RadialDraw {
                            eps_w: eps_w.clone(),
                            r_w: *r_w,
                            eps_b: eps_b.clone(),
                            r_b: *r_b,
                        }),
                        _ => Err(Error::config("radial layer without radial noise slot")),
                    })
                    .collect::<Result<_>>()?;
                kl_radial_mc(tape, layer, *vars, &draws)?
            }
            (_, KlMode::ClosedForm) => {
                let sw = tape.softplus(vars.rho_w)?;
                let klw = kl_diag_gaussians(tape, vars.mu_w, sw, layer.prior_scale())?;
                let sb = tape.softplus(vars.rho_b)?;
                let klb = kl_diag_gaussians(tape, vars.mu_b, sb, layer.prior_scale())?;
                tape.add(klw, klb)?
            }
            (SamplerKind::Naive, KlMode::Sampled) => {
                sampled_kl_naive(tape, layer, *vars, *slot, noise)?
            }
            (other, KlMode::Sampled) => {
                return Err(Error::config(format!(
                    "sampled KL mode needs explicit weight draws; sampler `{}` has none",
                    other.as_str()
                )));
            }
        };
        kl_total = Some(match kl_total {
            None => kl_layer,
            Some(acc) => tape.add(acc, kl_layer)?,
        });
    }
    let kl_total = kl_total.expect("non-empty variational slots");
    let pi = cfg.weight(batch_index)?;
    let weighted_kl = tape.scale(kl_total, real(pi))?;

    let mut data_total: Option<Var> = None;
    for bundle in noise {
        let (mu, sigma_sq) = model.forward(tape, bound, x, bundle)?;
        let nll = gaussian_nll_sum(tape, y, mu, sigma_sq)?;
        data_total = Some(match data_total {
            None => nll,
            Some(acc) => tape.add(acc, nll)?,
        });
    }
    let data = data_total.expect("n_mc_train >= 1");
    let data = tape.scale(data, real(1.0 / cfg.n_mc_train as f64))?;

    let loss = tape.add(weighted_kl, data)?;
    Ok(ElboParts {
        loss,
        weighted_kl,
        data,
    })
}

/// Strict sampled ratio `(1/S) sum_s [log q(w_s) - log p(w_s)]` for naive
/// draws, sharing the forward's epsilon so the estimator stays frozen-noise
/// deterministic.
fn sampled_kl_naive<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    slot: usize,
    noise: &[NoiseBundle<F>],
) -> Result<Var> {
    let p = layer.prior_scale().as_f64();
    let mut total: Option<Var> = None;
    for bundle in noise {
        let LayerNoise::Variational(VariationalNoise::Naive { eps_w, eps_b }) =
            &bundle.slots[slot]
        else {
            return Err(Error::config("naive layer without naive noise slot"));
        };
        for (mu, rho, eps) in [
            (vars.mu_w, vars.rho_w, eps_w),
            (vars.mu_b, vars.rho_b, eps_b),
        ] {
            let sigma = tape.softplus(rho)?;
            let e = tape.leaf(eps);
            let dw = tape.mul(sigma, e)?;
            let w = tape.add(mu, dw)?;
            // log q(w_s) = sum_i [-ln sigma_i - eps_i²/2 - ln(2π)/2], and
            // -log p(w_s) = sum_i [w_i²/(2p²) + ln p + ln(2π)/2]; the 2π
            // halves cancel and eps² is a frozen constant.
            let log_sigma = tape.log(sigma)?;
            let sum_log_sigma = tape.sum(log_sigma)?;
            let neg_log_q_var = tape.scale(sum_log_sigma, real(-1.0))?;
            let w_sq = tape.square(w)?;
            let quad = tape.sum(w_sq)?;
            let quad = tape.scale(quad, real(1.0 / (2.0 * p * p)))?;
            let eps_sq_half: f64 =
                eps.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / 2.0;
            let dim = eps.len() as f64;
            let t = tape.add(neg_log_q_var, quad)?;
            let term = tape.add_scalar(t, real(dim * p.ln() - eps_sq_half))?;
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
    }
    let total = total.expect("at least one bundle");
    tape.scale(total, real(1.0 / noise.len() as f64))
}

/// Dropout objective: batch-mean Gaussian NLL under one mask draw plus
/// `lambda · sum_l ||W_l||²` over the plain linear weights.
pub fn mcd_objective<F: Real>(
    tape: &mut Tape<F>,
    model: &FunctionalModel<F>,
    bound: &BoundModel,
    x: Var,
    y: Var,
    lambda: F,
    noise: &NoiseBundle<F>,
) -> Result<Var> {
    if lambda < F::zero() {
        return Err(Error::config("lambda must be >= 0"));
    }
    if !model
        .trunk
        .iter()
        .any(|l| matches!(l, crate::layers::Layer::Dropout(_)))
    {
        return Err(Error::config("mcd_objective requires dropout layers"));
    }
    let (mu, sigma_sq) = model.forward(tape, bound, x, noise)?;
    let nll = gaussian_nll(tape, y, mu, sigma_sq)?;
    let mut penalty: Option<Var> = None;
    for w in model.linear_weight_vars(bound) {
        let sq = tape.square(w)?;
        let s = tape.sum(sq)?;
        penalty = Some(match penalty {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    match penalty {
        None => Ok(nll),
        Some(p) => {
            let scaled = tape.scale(p, lambda)?;
            tape.add(nll, scaled)
        }
    }
}
