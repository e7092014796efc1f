use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::dropout::{forward_dropout, DropoutLayer};
use crate::layers::linear::{bind_linear, forward_linear, LinearLayer, LinearVars};
use crate::layers::variational::{
    bind_variational, forward_variational, SamplerKind, VariationalLinear, VariationalNoise,
    VariationalVars,
};
use crate::scalar::Real;
use rand::Rng;

#[derive(Clone, Debug)]
pub enum Layer<F: Real> {
    Linear(LinearLayer<F>),
    Variational(VariationalLinear<F>),
    Dropout(DropoutLayer),
    Relu,
}

impl<F: Real> Layer<F> {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Layer::Variational(_) | Layer::Dropout(_))
    }

    fn params(&self) -> Vec<&Tensor<F>> {
        match self {
            Layer::Linear(l) => vec![&l.w, &l.b],
            Layer::Variational(l) => vec![&l.mu_w, &l.rho_w, &l.mu_b, &l.rho_b],
            _ => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Linear(l) => vec![&mut l.w, &mut l.b],
            Layer::Variational(l) => vec![&mut l.mu_w, &mut l.rho_w, &mut l.mu_b, &mut l.rho_b],
            _ => vec![],
        }
    }
}

/// Per-layer noise slot of one forward pass.
#[derive(Clone, Debug)]
pub enum LayerNoise<F: Real> {
    None,
    Variational(VariationalNoise<F>),
    Dropout { mask: Tensor<F> },
}

/// Every stochastic layer's draws for one forward pass; empty slots for
/// deterministic layers. Slot order: trunk layers, then the mu head, then
/// the variance head.
#[derive(Clone, Debug)]
pub struct NoiseBundle<F: Real> {
    pub slots: Vec<LayerNoise<F>>,
}

#[derive(Clone, Copy, Debug)]
pub enum BoundLayer {
    Linear(LinearVars),
    Variational(VariationalVars),
    Dropout,
    Relu,
}

/// Parameter handles of a whole model entered on one tape.
pub struct BoundModel {
    pub trunk: Vec<BoundLayer>,
    pub head_mu: BoundLayer,
    pub head_rho: BoundLayer,
}

/// Shared-trunk functional model with two output heads: a mean head and an
/// unconstrained variance head mapped through `sigma = softplus(rho_out)`,
/// `sigma² = sigma·sigma`, so the predicted variance is strictly positive
/// for every input.
#[derive(Clone, Debug)]
pub struct FunctionalModel<F: Real> {
    pub trunk: Vec<Layer<F>>,
    pub head_mu: Layer<F>,
    pub head_rho: Layer<F>,
    input_dim: usize,
    /// Fixed affine output map: `mu = raw·scale + loc`,
    /// `sigma = softplus(raw_rho)·scale`. Set once from the training-label
    /// moments so the network works at unit scale while predictions stay in
    /// target units; never trained.
    target_loc: F,
    target_scale: F,
}

impl<F: Real> FunctionalModel<F> {
    pub fn new(
        trunk: Vec<Layer<F>>,
        head_mu: Layer<F>,
        head_rho: Layer<F>,
        input_dim: usize,
    ) -> Result<Self> {
        for head in [&head_mu, &head_rho] {
            match head {
                Layer::Linear(_) | Layer::Variational(_) => {}
                _ => return Err(Error::config("model heads must be affine layers")),
            }
        }
        Ok(FunctionalModel {
            trunk,
            head_mu,
            head_rho,
            input_dim,
            target_loc: F::zero(),
            target_scale: F::one(),
        })
    }

    pub fn target_affine(&self) -> (F, F) {
        (self.target_loc, self.target_scale)
    }

    pub fn set_target_affine(&mut self, loc: F, scale: F) -> Result<()> {
        if scale <= F::zero() {
            return Err(Error::config("target scale must be positive"));
        }
        self.target_loc = loc;
        self.target_scale = scale;
        Ok(())
    }

    /// Deterministic heteroscedastic network: linear/relu trunk, two linear
    /// heads.
    pub fn hnn<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut trunk = Vec::new();
        let mut width = input_dim;
        for &h in hidden {
            trunk.push(Layer::Linear(LinearLayer::init(h, width, rng)));
            trunk.push(Layer::Relu);
            width = h;
        }
        let head_mu = Layer::Linear(LinearLayer::init(1, width, rng));
        let head_rho = Layer::Linear(LinearLayer::init(1, width, rng));
        FunctionalModel::new(trunk, head_mu, head_rho, input_dim)
    }

    /// HNN trunk with a dropout layer after each hidden activation; masks
    /// stay active at prediction time.
    pub fn mcd<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        p: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut trunk = Vec::new();
        let mut width = input_dim;
        for &h in hidden {
            trunk.push(Layer::Linear(LinearLayer::init(h, width, rng)));
            trunk.push(Layer::Relu);
            trunk.push(Layer::Dropout(DropoutLayer::new(p, h)?));
            width = h;
        }
        let head_mu = Layer::Linear(LinearLayer::init(1, width, rng));
        let head_rho = Layer::Linear(LinearLayer::init(1, width, rng));
        FunctionalModel::new(trunk, head_mu, head_rho, input_dim)
    }

    /// Mean-field variational network; every affine layer (heads included)
    /// carries Gaussian variational parameters sampled by `sampler`.
    pub fn bnn<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        sampler: SamplerKind,
        prior_scale: F,
        q_scale: F,
        rng: &mut R,
    ) -> Result<Self> {
        let mut trunk = Vec::new();
        let mut width = input_dim;
        for &h in hidden {
            trunk.push(Layer::Variational(VariationalLinear::init(
                h,
                width,
                prior_scale,
                q_scale,
                sampler,
                rng,
            )?));
            trunk.push(Layer::Relu);
            width = h;
        }
        let head_mu = Layer::Variational(VariationalLinear::init(
            1,
            width,
            prior_scale,
            q_scale,
            sampler,
            rng,
        )?);
        let head_rho = Layer::Variational(VariationalLinear::init(
            1,
            width,
            prior_scale,
            q_scale,
            sampler,
            rng,
        )?);
        FunctionalModel::new(trunk, head_mu, head_rho, input_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn slot_count(&self) -> usize {
        self.trunk.len() + 2
    }

    pub fn is_stochastic(&self) -> bool {
        self.layers_with_heads().any(|l| l.is_stochastic())
    }

    fn layers_with_heads(&self) -> impl Iterator<Item = &Layer<F>> {
        self.trunk
            .iter()
            .chain(std::iter::once(&self.head_mu))
            .chain(std::iter::once(&self.head_rho))
    }

    /// Flat parameter list in a stable order (trunk first, then heads).
    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for l in self.layers_with_heads() {
            out.extend(l.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = Vec::new();
        for l in self
            .trunk
            .iter_mut()
            .chain(std::iter::once(&mut self.head_mu))
            .chain(std::iter::once(&mut self.head_rho))
        {
            out.extend(l.params_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn variational_layers(&self) -> Vec<&VariationalLinear<F>> {
        self.layers_with_heads()
            .filter_map(|l| match l {
                Layer::Variational(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    /// Enters all parameters on a tape. With `trainable`, gradients flow to
    /// every parameter leaf.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: bool) -> BoundModel {
        let bind_one = |tape: &mut Tape<F>, layer: &Layer<F>| match layer {
            Layer::Linear(l) => BoundLayer::Linear(bind_linear(tape, l, trainable)),
            Layer::Variational(l) => BoundLayer::Variational(bind_variational(tape, l, trainable)),
            Layer::Dropout(_) => BoundLayer::Dropout,
            Layer::Relu => BoundLayer::Relu,
        };
        BoundModel {
            trunk: self.trunk.iter().map(|l| bind_one(tape, l)).collect(),
            head_mu: bind_one(tape, &self.head_mu),
            head_rho: bind_one(tape, &self.head_rho),
        }
    }

    /// Parameter vars of a bound model, in [`FunctionalModel::params`] order.
    pub fn param_vars(&self, bound: &BoundModel) -> Vec<Var> {
        let mut out = Vec::new();
        let collect = |b: &BoundLayer, out: &mut Vec<Var>| match b {
            BoundLayer::Linear(v) => out.extend([v.w, v.b]),
            BoundLayer::Variational(v) => out.extend([v.mu_w, v.rho_w, v.mu_b, v.rho_b]),
            _ => {}
        };
        for b in &bound.trunk {
            collect(b, &mut out);
        }
        collect(&bound.head_mu, &mut out);
        collect(&bound.head_rho, &mut out);
        out
    }

    /// Bound variational layers paired with their specs, for KL terms.
    pub fn variational_vars<'a>(
        &'a self,
        bound: &BoundModel,
    ) -> Vec<(&'a VariationalLinear<F>, VariationalVars)> {
        self.variational_slots(bound)
            .into_iter()
            .map(|(_, v, vars)| (v, vars))
            .collect()
    }

    /// Variational layers with their noise-slot index, for KL terms that
    /// reuse the forward draws.
    pub fn variational_slots<'a>(
        &'a self,
        bound: &BoundModel,
    ) -> Vec<(usize, &'a VariationalLinear<F>, VariationalVars)> {
        let mut out = Vec::new();
        for (i, (layer, b)) in self
            .layers_with_heads()
            .zip(bound.trunk.iter().chain([&bound.head_mu, &bound.head_rho]))
            .enumerate()
        {
            if let (Layer::Variational(v), BoundLayer::Variational(vars)) = (layer, b) {
                out.push((i, v, *vars));
            }
        }
        out
    }

    /// Weight (not bias) vars of plain linear layers, for L2 penalties.
    pub fn linear_weight_vars(&self, bound: &BoundModel) -> Vec<Var> {
        self.layers_with_heads()
            .zip(bound.trunk.iter().chain([&bound.head_mu, &bound.head_rho]))
            .filter_map(|(layer, b)| match (layer, b) {
                (Layer::Linear(_), BoundLayer::Linear(v)) => Some(v.w),
                _ => None,
            })
            .collect()
    }

    /// Draws one noise bundle covering every stochastic layer.
    pub fn sample_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> NoiseBundle<F> {
        let slots = self
            .layers_with_heads()
            .map(|layer| match layer {
                Layer::Variational(v) => {
                    LayerNoise::Variational(VariationalNoise::sample(v, batch, rng))
                }
                Layer::Dropout(d) => LayerNoise::Dropout {
                    mask: d.sample_mask(batch, rng),
                },
                _ => LayerNoise::None,
            })
            .collect();
        NoiseBundle { slots }
    }

    /// All-empty bundle, valid only for fully deterministic models.
    pub fn empty_noise(&self) -> NoiseBundle<F> {
        NoiseBundle {
            slots: vec![LayerNoise::None; self.slot_count()],
        }
    }

    /// One pass through trunk and heads: returns `(mu, sigma²)` vars shaped
    /// batch×1. Every stochastic layer must find its draws in `noise`.
    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        bound: &BoundModel,
        x: Var,
        noise: &NoiseBundle<F>,
    ) -> Result<(Var, Var)> {
        if noise.slots.len() != self.slot_count() {
            return Err(Error::config(format!(
                "noise bundle has {} slots, model needs {}",
                noise.slots.len(),
                self.slot_count()
            )));
        }
        let shape = tape.shape_of(x);
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Shape {
                op: "model_forward",
                lhs: shape.to_vec(),
                rhs: vec![0, self.input_dim],
            });
        }
        let mut h = x;
        for (i, (layer, b)) in self.trunk.iter().zip(&bound.trunk).enumerate() {
            h = layer_forward(tape, layer, b, h, &noise.slots[i], i)?;
        }
        let n = self.trunk.len();
        let mu_raw = layer_forward(tape, &self.head_mu, &bound.head_mu, h, &noise.slots[n], n)?;
        let rho = layer_forward(
            tape,
            &self.head_rho,
            &bound.head_rho,
            h,
            &noise.slots[n + 1],
            n + 1,
        )?;
        let mu = if self.target_scale == F::one() && self.target_loc == F::zero() {
            mu_raw
        } else {
            let scaled = tape.scale(mu_raw, self.target_scale)?;
            tape.add_scalar(scaled, self.target_loc)?
        };
        let sigma = tape.softplus(rho)?;
        let sigma = if self.target_scale == F::one() {
            sigma
        } else {
            tape.scale(sigma, self.target_scale)?
        };
        let sigma_sq = tape.square(sigma)?;
        Ok((mu, sigma_sq))
    }

    /// Untaped convenience pass: `(mu, sigma²)` values per batch row.
    pub fn predict_batch(&self, x: &Tensor<F>, noise: &NoiseBundle<F>) -> Result<(Vec<F>, Vec<F>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.leaf(x);
        let (mu, sigma_sq) = self.forward(&mut tape, &bound, xv, noise)?;
        Ok((tape.value(mu).to_vec(), tape.value(sigma_sq).to_vec()))
    }

    /// Deterministic copy for pretraining: variational layers collapse to
    /// their means; everything else is cloned as-is.
    pub fn to_mu_model(&self) -> Result<FunctionalModel<F>> {
        let map = |layer: &Layer<F>| -> Result<Layer<F>> {
            Ok(match layer {
                Layer::Variational(v) => {
                    Layer::Linear(LinearLayer::new(v.mu_w.clone(), v.mu_b.clone())?)
                }
                other => other.clone(),
            })
        };
        let trunk = self.trunk.iter().map(map).collect::<Result<Vec<_>>>()?;
        let mut model =
            FunctionalModel::new(trunk, map(&self.head_mu)?, map(&self.head_rho)?, self.input_dim)?;
        model.target_loc = self.target_loc;
        model.target_scale = self.target_scale;
        Ok(model)
    }

    /// Copies the affine parameters of a structurally matching mu-model back
    /// into the variational means; rho stays untouched.
    pub fn adopt_mu_from(&mut self, mu_model: &FunctionalModel<F>) -> Result<()> {
        let n = self.trunk.len();
        if mu_model.trunk.len() != n {
            return Err(Error::config("mu-model structure mismatch"));
        }
        let mut pairs: Vec<(&mut Layer<F>, &Layer<F>)> = self
            .trunk
            .iter_mut()
            .zip(mu_model.trunk.iter())
            .collect();
        pairs.push((&mut self.head_mu, &mu_model.head_mu));
        pairs.push((&mut self.head_rho, &mu_model.head_rho));
        for (dst, src) in pairs {
            match (dst, src) {
                (Layer::Variational(v), Layer::Linear(l)) => {
                    v.mu_w = l.w.clone();
                    v.mu_b = l.b.clone();
                }
                (Layer::Linear(dl), Layer::Linear(sl)) => {
                    dl.w = sl.w.clone();
                    dl.b = sl.b.clone();
                }
                (Layer::Dropout(_), Layer::Dropout(_)) | (Layer::Relu, Layer::Relu) => {}
                _ => return Err(Error::config("mu-model structure mismatch")),
            }
        }
        Ok(())
    }
}

fn layer_forward<F: Real>(
    tape: &mut Tape<F>,
    layer: &Layer<F>,
    bound: &BoundLayer,
    x: Var,
    noise: &LayerNoise<F>,
    idx: usize,
) -> Result<Var> {
    match (layer, bound) {
        (Layer::Linear(_), BoundLayer::Linear(vars)) => forward_linear(tape, *vars, x),
        (Layer::Relu, BoundLayer::Relu) => tape.relu(x),
        (Layer::Variational(v), BoundLayer::Variational(vars)) => match noise {
            LayerNoise::Variational(n) => forward_variational(tape, v, *vars, x, n),
            _ => Err(Error::config(format!(
                "missing noise for stochastic layer {idx} ({})",
                v.sampler().as_str()
            ))),
        },
        (Layer::Dropout(d), BoundLayer::Dropout) => match noise {
            LayerNoise::Dropout { mask } => forward_dropout(tape, d, x, mask),
            _ => Err(Error::config(format!(
                "missing noise for stochastic layer {idx} (dropout)"
            ))),
        },
        _ => Err(Error::config("bound model does not match layer structure")),
    }
}
