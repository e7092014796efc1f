//! Deterministic and stochastic layers plus the two-headed functional model.
//!
//! Stochastic layers never draw noise themselves during a forward pass —
//! draws arrive as explicit [`NoiseBundle`] inputs, so identical bundles
//! give bit-identical outputs and gradient checks are exact.

mod checkpoint;
mod dropout;
mod linear;
mod model;
mod variational;

pub use checkpoint::{
    model_to_record, record_to_model, Checkpoint, LayerRecord, ModelRecord,
    CHECKPOINT_FORMAT_VERSION,
};
pub use dropout::{forward_dropout, DropoutLayer};
pub use linear::{bind_linear, forward_linear, LinearLayer, LinearVars};
pub use model::{BoundLayer, BoundModel, FunctionalModel, Layer, LayerNoise, NoiseBundle};
pub use variational::{
    bind_variational, forward_flipout, forward_lrt, forward_naive, forward_radial,
    forward_variational, softplus_inverse, softplus_scale, SamplerKind, VariationalLinear,
    VariationalNoise, VariationalVars,
};
pub(crate) use variational::radial_direction;
