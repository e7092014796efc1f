//! Posterior-predictive sampling, deep-ensemble mixture moments, and the
//! epistemic/aleatoric decomposition of predictive variance.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::layers::FunctionalModel;
use crate::method::Method;
use crate::rng::Stream;
use crate::scalar::{real, Real};

/// Outputs of N stochastic forward passes over one batch.
#[derive(Clone, Debug)]
pub struct PredictiveSampleSet<F: Real> {
    /// N×batch predicted means, row per pass.
    pub mu: Vec<Vec<F>>,
    /// N×batch predicted variances, congruent with `mu`; strictly positive.
    pub sigma_sq: Vec<Vec<F>>,
}

impl<F: Real> PredictiveSampleSet<F> {
    pub fn new(mu: Vec<Vec<F>>, sigma_sq: Vec<Vec<F>>) -> Result<Self> {
        if mu.is_empty() || mu.len() != sigma_sq.len() {
            return Err(Error::config("sample set needs N >= 1 congruent rows"));
        }
        let batch = mu[0].len();
        if mu
            .iter()
            .zip(&sigma_sq)
            .any(|(m, s)| m.len() != batch || s.len() != batch)
        {
            return Err(Error::config("sample set rows must be congruent"));
        }
        if sigma_sq
            .iter()
            .any(|row| row.iter().any(|v| *v <= F::zero()))
        {
            return Err(Error::numeric("sample set contains non-positive variances"));
        }
        Ok(PredictiveSampleSet { mu, sigma_sq })
    }

    pub fn passes(&self) -> usize {
        self.mu.len()
    }

    pub fn batch(&self) -> usize {
        self.mu[0].len()
    }
}

/// One prediction with its exact variance split. `var_total` is constructed
/// as `var_epistemic + var_aleatoric`, so the identity holds bit-exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<F: Real> {
    pub mean: F,
    pub var_total: F,
    pub var_epistemic: F,
    pub var_aleatoric: F,
}

/// Independently trained members combined by mixture moments.
pub struct Ensemble<F: Real> {
    pub members: Vec<FunctionalModel<F>>,
    /// Training seed of each member.
    pub member_seeds: Vec<u64>,
}

/// Runs N forward passes with independent noise bundles drawn from `rng`.
pub fn sample_predictive<F: Real>(
    model: &FunctionalModel<F>,
    x: &Tensor<F>,
    passes: usize,
    rng: &mut Stream,
) -> Result<PredictiveSampleSet<F>> {
    if passes < 1 {
        return Err(Error::config("predictive sampling needs N >= 1"));
    }
    let batch = x.shape()[0];
    let mut mu = Vec::with_capacity(passes);
    let mut sigma_sq = Vec::with_capacity(passes);
    for _ in 0..passes {
        let bundle = if model.is_stochastic() {
            model.sample_noise(batch, rng)
        } else {
            model.empty_noise()
        };
        let (m, s) = model.predict_batch(x, &bundle)?;
        mu.push(m);
        sigma_sq.push(s);
    }
    PredictiveSampleSet::new(mu, sigma_sq)
}

/// Moment decomposition per batch element: the predictive mean, the spread
/// of means across passes (epistemic), the mean of predicted variances
/// (aleatoric), and their sum (total).
pub fn decompose<F: Real>(set: &PredictiveSampleSet<F>) -> Vec<Prediction<F>> {
    let n = real::<F>(set.passes() as f64);
    let batch = set.batch();
    let mut out = Vec::with_capacity(batch);
    for j in 0..batch {
        let mean = set.mu.iter().map(|row| row[j]).sum::<F>() / n;
        // Two-pass spread keeps the epistemic part non-negative.
        let var_epistemic = set
            .mu
            .iter()
            .map(|row| {
                let d = row[j] - mean;
                d * d
            })
            .sum::<F>()
            / n;
        let var_aleatoric = set.sigma_sq.iter().map(|row| row[j]).sum::<F>() / n;
        out.push(Prediction {
            mean,
            var_total: var_epistemic + var_aleatoric,
            var_epistemic,
            var_aleatoric,
        });
    }
    out
}

/// Gaussian-mixture moments of member outputs for one input:
/// `mu = mean(mu_m)`, `sigma² = mean(sigma_m² + mu_m²) - mu²`.
pub fn ensemble_mixture<F: Real>(members: &[(F, F)]) -> Result<(F, F)> {
    if members.is_empty() {
        return Err(Error::config("ensemble mixture needs at least one member"));
    }
    let m = real::<F>(members.len() as f64);
    let mean = members.iter().map(|(mu, _)| *mu).sum::<F>() / m;
    let second = members
        .iter()
        .map(|(mu, var)| *var + *mu * *mu)
        .sum::<F>()
        / m;
    Ok((mean, second - mean * mean))
}

/// What a method's variance split means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionTag {
    /// Epistemic/aleatoric parts are sampled posterior moments.
    Sampled,
    /// The algebraic split is reported but the members are too few/uniform
    /// to interpret it (deep ensembles); comparisons should use the total.
    Nominal,
    /// Epistemic uncertainty is not modeled (single deterministic network).
    None,
}

use serde::{Deserialize, Serialize};

/// Model-or-ensemble input to [`predict`].
pub enum Predictor<'a, F: Real> {
    Single(&'a FunctionalModel<F>),
    Ensemble(&'a Ensemble<F>),
}

/// Uniform prediction facade over all seven methods. Returns one
/// [`Prediction`] per batch row plus the tag describing how to read the
/// split.
pub fn predict<F: Real>(
    method: Method,
    predictor: &Predictor<'_, F>,
    x: &Tensor<F>,
    passes: usize,
    rng: &mut Stream,
) -> Result<(Vec<Prediction<F>>, DecompositionTag)> {
    match (method, predictor) {
        (Method::Hnn, Predictor::Single(model)) => {
            let (mu, sigma_sq) = model.predict_batch(x, &model.empty_noise())?;
            Ok((
                mu.into_iter()
                    .zip(sigma_sq)
                    .map(|(mean, var)| Prediction {
                        mean,
                        var_total: var,
                        var_epistemic: F::zero(),
                        var_aleatoric: var,
                    })
                    .collect(),
                DecompositionTag::None,
            ))
        }
        (Method::Mcd, Predictor::Single(model))
        | (Method::BnnNaive, Predictor::Single(model))
        | (Method::BnnLrt, Predictor::Single(model))
        | (Method::BnnFo, Predictor::Single(model))
        | (Method::BnnRad, Predictor::Single(model)) => {
            let set = sample_predictive(model, x, passes, rng)?;
            Ok((decompose(&set), DecompositionTag::Sampled))
        }
        (Method::De, Predictor::Ensemble(ensemble)) => {
            if ensemble.members.is_empty() {
                return Err(Error::config("ensemble has no members"));
            }
            let mut mu = Vec::with_capacity(ensemble.members.len());
            let mut sigma_sq = Vec::with_capacity(ensemble.members.len());
            for member in &ensemble.members {
                let (m, s) = member.predict_batch(x, &member.empty_noise())?;
                mu.push(m);
                sigma_sq.push(s);
            }
            let set = PredictiveSampleSet::new(mu, sigma_sq)?;
            Ok((decompose(&set), DecompositionTag::Nominal))
        }
        (m, Predictor::Single(_)) => Err(Error::config(format!(
            "method `{m}` needs an ensemble predictor"
        ))),
        (m, Predictor::Ensemble(_)) => Err(Error::config(format!(
            "method `{m}` needs a single-model predictor"
        ))),
    }
}
