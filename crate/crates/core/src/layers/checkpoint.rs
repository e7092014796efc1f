use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::layers::dropout::DropoutLayer;
use crate::layers::linear::LinearLayer;
use crate::layers::model::{FunctionalModel, Layer};
use crate::layers::variational::{SamplerKind, VariationalLinear};
use crate::method::Method;
use crate::scalar::{real, Real};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Self-describing model checkpoint. Parameters serialize as f64, which
/// round-trips bit-exactly through JSON (shortest-representation floats),
/// so save → load → save is byte-identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub method: Method,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub input_dim: usize,
    /// One record for single models; all members for ensembles.
    pub models: Vec<ModelRecord>,
    /// Training seed of each member (provenance); `[seed]` for single models.
    pub member_seeds: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub trunk: Vec<LayerRecord>,
    pub head_mu: LayerRecord,
    pub head_rho: LayerRecord,
    pub target_loc: f64,
    pub target_scale: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerRecord {
    Linear {
        out_dim: usize,
        in_dim: usize,
        w: Vec<f64>,
        b: Vec<f64>,
    },
    Variational {
        out_dim: usize,
        in_dim: usize,
        sampler: SamplerKind,
        prior_scale: f64,
        mu_w: Vec<f64>,
        rho_w: Vec<f64>,
        mu_b: Vec<f64>,
        rho_b: Vec<f64>,
    },
    Dropout {
        p: f64,
        width: usize,
    },
    Relu,
}

impl Checkpoint {
    pub fn single<F: Real>(
        method: Method,
        seed: u64,
        dataset_fingerprint: String,
        model: &FunctionalModel<F>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            method,
            seed,
            dataset_fingerprint,
            input_dim: model.input_dim(),
            models: vec![model_to_record(model)],
            member_seeds: vec![seed],
        }
    }

    pub fn ensemble<F: Real>(
        seed: u64,
        dataset_fingerprint: String,
        members: &[FunctionalModel<F>],
        member_seeds: Vec<u64>,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::config("ensemble checkpoint needs at least one member"))?;
        Ok(Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            method: Method::De,
            seed,
            dataset_fingerprint,
            input_dim: first.input_dim(),
            models: members.iter().map(model_to_record).collect(),
            member_seeds,
        })
    }

    pub fn into_models<F: Real>(&self) -> Result<Vec<FunctionalModel<F>>> {
        self.models
            .iter()
            .map(|r| record_to_model(r, self.input_dim))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::data(format!("checkpoint encode: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("checkpoint parse ({}): {e}", path.display())))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::data(format!(
                "checkpoint format version {} unsupported (expected {})",
                ckpt.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        if ckpt.models.is_empty() {
            return Err(Error::data("checkpoint holds no models"));
        }
        Ok(ckpt)
    }
}

pub fn model_to_record<F: Real>(model: &FunctionalModel<F>) -> ModelRecord {
    let conv = |layer: &Layer<F>| -> LayerRecord {
        match layer {
            Layer::Linear(l) => LayerRecord::Linear {
                out_dim: l.out_dim(),
                in_dim: l.in_dim(),
                w: to_f64(&l.w),
                b: to_f64(&l.b),
            },
            Layer::Variational(v) => LayerRecord::Variational {
                out_dim: v.out_dim(),
                in_dim: v.in_dim(),
                sampler: v.sampler(),
                prior_scale: v.prior_scale().as_f64(),
                mu_w: to_f64(&v.mu_w),
                rho_w: to_f64(&v.rho_w),
                mu_b: to_f64(&v.mu_b),
                rho_b: to_f64(&v.rho_b),
            },
            Layer::Dropout(d) => LayerRecord::Dropout {
                p: d.p(),
                width: d.width(),
            },
            Layer::Relu => LayerRecord::Relu,
        }
    };
    let (loc, scale) = model.target_affine();
    ModelRecord {
        trunk: model.trunk.iter().map(conv).collect(),
        head_mu: conv(&model.head_mu),
        head_rho: conv(&model.head_rho),
        target_loc: loc.as_f64(),
        target_scale: scale.as_f64(),
    }
}

pub fn record_to_model<F: Real>(
    record: &ModelRecord,
    input_dim: usize,
) -> Result<FunctionalModel<F>> {
    let conv = |r: &LayerRecord| -> Result<Layer<F>> {
        Ok(match r {
            LayerRecord::Linear {
                out_dim,
                in_dim,
                w,
                b,
            } => Layer::Linear(LinearLayer::new(
                from_f64(&[*out_dim, *in_dim], w)?,
                from_f64(&[*out_dim], b)?,
            )?),
            LayerRecord::Variational {
                out_dim,
                in_dim,
                sampler,
                prior_scale,
                mu_w,
                rho_w,
                mu_b,
                rho_b,
            } => Layer::Variational(VariationalLinear::new(
                from_f64(&[*out_dim, *in_dim], mu_w)?,
                from_f64(&[*out_dim, *in_dim], rho_w)?,
                from_f64(&[*out_dim], mu_b)?,
                from_f64(&[*out_dim], rho_b)?,
                real(*prior_scale),
                *sampler,
            )?),
            LayerRecord::Dropout { p, width } => Layer::Dropout(DropoutLayer::new(*p, *width)?),
            LayerRecord::Relu => Layer::Relu,
        })
    };
    let trunk = record.trunk.iter().map(conv).collect::<Result<Vec<_>>>()?;
    let mut model =
        FunctionalModel::new(trunk, conv(&record.head_mu)?, conv(&record.head_rho)?, input_dim)?;
    model.set_target_affine(real(record.target_loc), real(record.target_scale))?;
    Ok(model)
}

fn to_f64<F: Real>(t: &Tensor<F>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

fn from_f64<F: Real>(shape: &[usize], data: &[f64]) -> Result<Tensor<F>> {
    Tensor::new(shape.to_vec(), data.iter().map(|&v| real(v)).collect())
}
