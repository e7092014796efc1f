use crate::autodiff::{softplus_stable, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::normal_vec;
use crate::scalar::{real, Real};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Weight-sampling strategy of a variational layer.
///
/// All four sample the same mean-field Gaussian posterior (radial replaces
/// the Gaussian radius law); they differ in how the draw enters the forward
/// pass and therefore in gradient variance and per-example correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// One weight draw shared by every row of the batch.
    Naive,
    /// Samples pre-activations instead of weights; per-example noise. Only
    /// valid for linear (non-weight-sharing) layers, which this layer is by
    /// construction.
    Lrt,
    /// Rank-one sign perturbations give pseudo-independent per-example draws.
    Flipout,
    /// Direction-normalized noise times a half-normal radius.
    Radial,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Naive => "naive",
            SamplerKind::Lrt => "lrt",
            SamplerKind::Flipout => "flipout",
            SamplerKind::Radial => "radial",
        }
    }
}

/// Linear layer with independent Gaussian variational parameters per weight:
/// `q(w) = N(mu, softplus(rho)^2)`, prior `N(0, prior_scale^2)` on every
/// coordinate.
#[derive(Clone, Debug)]
pub struct VariationalLinear<F: Real> {
    pub mu_w: Tensor<F>,
    pub rho_w: Tensor<F>,
    pub mu_b: Tensor<F>,
    pub rho_b: Tensor<F>,
    prior_scale: F,
    sampler: SamplerKind,
}

impl<F: Real> VariationalLinear<F> {
    pub fn new(
        mu_w: Tensor<F>,
        rho_w: Tensor<F>,
        mu_b: Tensor<F>,
        rho_b: Tensor<F>,
        prior_scale: F,
        sampler: SamplerKind,
    ) -> Result<Self> {
        if prior_scale <= F::zero() {
            return Err(Error::config("prior_scale must be positive"));
        }
        if mu_w.shape() != rho_w.shape()
            || mu_b.shape() != rho_b.shape()
            || mu_w.shape().len() != 2
            || mu_b.shape().len() != 1
            || mu_w.shape()[0] != mu_b.shape()[0]
        {
            return Err(Error::Shape {
                op: "variational::new",
                lhs: mu_w.shape().to_vec(),
                rhs: mu_b.shape().to_vec(),
            });
        }
        Ok(VariationalLinear {
            mu_w,
            rho_w,
            mu_b,
            rho_b,
            prior_scale,
            sampler,
        })
    }

    /// Fan-in-scaled random means; every rho set to `softplus⁻¹(q_scale)` so
    /// the posterior starts at scale `q_scale`.
    pub fn init<R: Rng + ?Sized>(
        out_dim: usize,
        in_dim: usize,
        prior_scale: F,
        q_scale: F,
        sampler: SamplerKind,
        rng: &mut R,
    ) -> Result<Self> {
        if q_scale <= F::zero() {
            return Err(Error::config("q_scale must be positive"));
        }
        let scale = real::<F>((2.0 / in_dim as f64).sqrt());
        let mu: Vec<F> = normal_vec::<F, _>(rng, out_dim * in_dim)
            .into_iter()
            .map(|v| v * scale)
            .collect();
        let rho = softplus_inverse(q_scale);
        VariationalLinear::new(
            Tensor::new(vec![out_dim, in_dim], mu)?,
            Tensor::full(vec![out_dim, in_dim], rho),
            Tensor::zeros(vec![out_dim]),
            Tensor::full(vec![out_dim], rho),
            prior_scale,
            sampler,
        )
    }

    pub fn out_dim(&self) -> usize {
        self.mu_w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.mu_w.shape()[1]
    }

    pub fn prior_scale(&self) -> F {
        self.prior_scale
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn weight_count(&self) -> usize {
        self.mu_w.len() + self.mu_b.len()
    }
}

/// `softplus(x) = y` solved for x; `y` must be positive.
pub fn softplus_inverse<F: Real>(y: F) -> F {
    // For large y, softplus(y) == y to machine precision.
    if y > real(30.0) {
        y
    } else {
        (y.exp() - F::one()).ln()
    }
}

/// Elementwise posterior scale `sigma = softplus(rho)`, numerically stable
/// for large |rho|; always strictly positive.
pub fn softplus_scale<F: Real>(rho: &Tensor<F>) -> Tensor<F> {
    let data = rho.data().iter().map(|&x| softplus_stable(x)).collect();
    Tensor::new(rho.shape().to_vec(), data).expect("shape preserved")
}

/// Bound parameter handles of a variational layer on a tape.
#[derive(Clone, Copy, Debug)]
pub struct VariationalVars {
    pub mu_w: Var,
    pub rho_w: Var,
    pub mu_b: Var,
    pub rho_b: Var,
}

pub fn bind_variational<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    trainable: bool,
) -> VariationalVars {
    let enter = |tape: &mut Tape<F>, t: &Tensor<F>| {
        let mut t = t.clone();
        t.set_requires_grad(trainable);
        tape.leaf(&t)
    };
    VariationalVars {
        mu_w: enter(tape, &layer.mu_w),
        rho_w: enter(tape, &layer.rho_w),
        mu_b: enter(tape, &layer.mu_b),
        rho_b: enter(tape, &layer.rho_b),
    }
}

/// Noise consumed by one variational forward pass. Draws are explicit so a
/// frozen bundle makes every forward a deterministic function of the
/// parameters (reparametrization gradients, exact finite-difference checks).
#[derive(Clone, Debug)]
pub enum VariationalNoise<F: Real> {
    /// Standard-normal draws shaped like W and b.
    Naive { eps_w: Tensor<F>, eps_b: Tensor<F> },
    /// Standard-normal draws shaped batch×out.
    Lrt { eps_out: Tensor<F> },
    /// `delta_w` standard normal shaped like W; sign tensors ±1 shaped
    /// batch×in / batch×out; `eps_b` standard normal batch×out for the
    /// per-example bias perturbation.
    Flipout {
        delta_w: Tensor<F>,
        sign_in: Tensor<F>,
        sign_out: Tensor<F>,
        eps_b: Tensor<F>,
    },
    /// Weight- and bias-shaped directions with half-normal radii.
    Radial {
        eps_w: Tensor<F>,
        r_w: F,
        eps_b: Tensor<F>,
        r_b: F,
    },
}

impl<F: Real> VariationalNoise<F> {
    /// Draws a fresh noise realization for `layer` and batch size `batch`.
    pub fn sample<R: Rng + ?Sized>(
        layer: &VariationalLinear<F>,
        batch: usize,
        rng: &mut R,
    ) -> Self {
        let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
        let w_shape = vec![out_dim, in_dim];
        match layer.sampler {
            SamplerKind::Naive => VariationalNoise::Naive {
                eps_w: Tensor::new(w_shape, normal_vec(rng, out_dim * in_dim)).unwrap(),
                eps_b: Tensor::new(vec![out_dim], normal_vec(rng, out_dim)).unwrap(),
            },
            SamplerKind::Lrt => VariationalNoise::Lrt {
                eps_out: Tensor::new(vec![batch, out_dim], normal_vec(rng, batch * out_dim))
                    .unwrap(),
            },
            SamplerKind::Flipout => VariationalNoise::Flipout {
                delta_w: Tensor::new(w_shape, normal_vec(rng, out_dim * in_dim)).unwrap(),
                sign_in: Tensor::new(
                    vec![batch, in_dim],
                    crate::rng::sign_vec(rng, batch * in_dim),
                )
                .unwrap(),
                sign_out: Tensor::new(
                    vec![batch, out_dim],
                    crate::rng::sign_vec(rng, batch * out_dim),
                )
                .unwrap(),
                eps_b: Tensor::new(vec![batch, out_dim], normal_vec(rng, batch * out_dim))
                    .unwrap(),
            },
            SamplerKind::Radial => {
                let eps_w = loop {
                    let draw: Vec<F> = normal_vec(rng, out_dim * in_dim);
                    if norm(&draw) > F::zero() {
                        break draw;
                    }
                };
                let eps_b = loop {
                    let draw: Vec<F> = normal_vec(rng, out_dim);
                    if norm(&draw) > F::zero() {
                        break draw;
                    }
                };
                VariationalNoise::Radial {
                    eps_w: Tensor::new(w_shape, eps_w).unwrap(),
                    r_w: F::standard_normal(rng).abs(),
                    eps_b: Tensor::new(vec![out_dim], eps_b).unwrap(),
                    r_b: F::standard_normal(rng).abs(),
                }
            }
        }
    }

    pub fn matches(&self, sampler: SamplerKind) -> bool {
        matches!(
            (self, sampler),
            (VariationalNoise::Naive { .. }, SamplerKind::Naive)
                | (VariationalNoise::Lrt { .. }, SamplerKind::Lrt)
                | (VariationalNoise::Flipout { .. }, SamplerKind::Flipout)
                | (VariationalNoise::Radial { .. }, SamplerKind::Radial)
        )
    }
}

fn norm<F: Real>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).sum::<F>().sqrt()
}

/// Dispatches to the forward matching the layer's sampler; the drawn weight
/// variables stay on the tape, so gradients flow into mu and rho.
pub fn forward_variational<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    x: Var,
    noise: &VariationalNoise<F>,
) -> Result<Var> {
    if !noise.matches(layer.sampler) {
        return Err(Error::config(format!(
            "noise bundle kind does not match sampler {}",
            layer.sampler.as_str()
        )));
    }
    match noise {
        VariationalNoise::Naive { eps_w, eps_b } => {
            forward_naive(tape, layer, vars, x, eps_w, eps_b)
        }
        VariationalNoise::Lrt { eps_out } => forward_lrt(tape, layer, vars, x, eps_out),
        VariationalNoise::Flipout {
            delta_w,
            sign_in,
            sign_out,
            eps_b,
        } => forward_flipout(tape, layer, vars, x, delta_w, sign_in, sign_out, eps_b),
        VariationalNoise::Radial {
            eps_w,
            r_w,
            eps_b,
            r_b,
        } => forward_radial(tape, layer, vars, x, eps_w, *r_w, eps_b, *r_b),
    }
}

/// `w = mu + sigma ⊙ eps`, one draw shared across the batch.
pub fn forward_naive<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    x: Var,
    eps_w: &Tensor<F>,
    eps_b: &Tensor<F>,
) -> Result<Var> {
    check_shape("forward_naive", eps_w, layer.mu_w.shape())?;
    check_shape("forward_naive", eps_b, layer.mu_b.shape())?;
    let sigma_w = tape.softplus(vars.rho_w)?;
    let ew = tape.leaf(eps_w);
    let dw = tape.mul(sigma_w, ew)?;
    let w = tape.add(vars.mu_w, dw)?;
    let sigma_b = tape.softplus(vars.rho_b)?;
    let eb = tape.leaf(eps_b);
    let db = tape.mul(sigma_b, eb)?;
    let b = tape.add(vars.mu_b, db)?;
    let wx = tape.matmul_t(x, w)?;
    tape.add_bias(wx, b)
}

/// Samples pre-activations: `out = F_mu(x) + eps ⊙ sqrt(F_var(x²))`, with
/// the variance pass using weights `sigma²`. Per-example independent noise,
/// two forward passes.
pub fn forward_lrt<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    x: Var,
    eps_out: &Tensor<F>,
) -> Result<Var> {
    let batch = tape.shape_of(x)[0];
    check_shape("forward_lrt", eps_out, &[batch, layer.out_dim()])?;
    let mu_wx = tape.matmul_t(x, vars.mu_w)?;
    let mu_pass = tape.add_bias(mu_wx, vars.mu_b)?;

    let sigma_w = tape.softplus(vars.rho_w)?;
    let var_w = tape.square(sigma_w)?;
    let x_sq = tape.square(x)?;
    let var_wx = tape.matmul_t(x_sq, var_w)?;
    let sigma_b = tape.softplus(vars.rho_b)?;
    let var_b = tape.square(sigma_b)?;
    let var_pass = tape.add_bias(var_wx, var_b)?;

    let std_pass = tape.sqrt(var_pass)?;
    let e = tape.leaf(eps_out);
    let perturb = tape.mul(e, std_pass)?;
    tape.add(mu_pass, perturb)
}

/// Rank-one sign-flip perturbations: exploits
/// `(ΔW ⊙ e1 e2ᵀ) x = e1 ⊙ (ΔW (x ⊙ e2))` to give each batch row a
/// pseudo-independent weight draw at one extra matmul. Biases use an
/// independent per-example Gaussian perturbation (the sign trick applies to
/// weight matrices).
#[allow(clippy::too_many_arguments)]
pub fn forward_flipout<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    x: Var,
    delta_w: &Tensor<F>,
    sign_in: &Tensor<F>,
    sign_out: &Tensor<F>,
    eps_b: &Tensor<F>,
) -> Result<Var> {
    let batch = tape.shape_of(x)[0];
    check_shape("forward_flipout", delta_w, layer.mu_w.shape())?;
    check_shape("forward_flipout", sign_in, &[batch, layer.in_dim()])?;
    check_shape("forward_flipout", sign_out, &[batch, layer.out_dim()])?;
    check_shape("forward_flipout", eps_b, &[batch, layer.out_dim()])?;
    for t in [sign_in, sign_out] {
        if t.data().iter().any(|&v| v != F::one() && v != -F::one()) {
            return Err(Error::domain(
                "forward_flipout",
                "sign entries must be -1 or +1",
            ));
        }
    }

    let mu_wx = tape.matmul_t(x, vars.mu_w)?;
    let mu_pass = tape.add_bias(mu_wx, vars.mu_b)?;

    let sigma_w = tape.softplus(vars.rho_w)?;
    let dw = tape.leaf(delta_w);
    let sw = tape.mul(sigma_w, dw)?;
    let s_in = tape.leaf(sign_in);
    let xs = tape.mul(x, s_in)?;
    let pert = tape.matmul_t(xs, sw)?;
    let s_out = tape.leaf(sign_out);
    let pert = tape.mul(pert, s_out)?;

    let sigma_b = tape.softplus(vars.rho_b)?;
    let sigma_b_rows = tape.broadcast(sigma_b, &[batch, layer.out_dim()])?;
    let eb = tape.leaf(eps_b);
    let b_pert = tape.mul(sigma_b_rows, eb)?;

    let out = tape.add(mu_pass, pert)?;
    tape.add(out, b_pert)
}

/// `w = mu + sigma ⊙ (eps/‖eps‖) · r` per parameter tensor, one shared draw
/// per batch.
#[allow(clippy::too_many_arguments)]
pub fn forward_radial<F: Real>(
    tape: &mut Tape<F>,
    layer: &VariationalLinear<F>,
    vars: VariationalVars,
    x: Var,
    eps_w: &Tensor<F>,
    r_w: F,
    eps_b: &Tensor<F>,
    r_b: F,
) -> Result<Var> {
    check_shape("forward_radial", eps_w, layer.mu_w.shape())?;
    check_shape("forward_radial", eps_b, layer.mu_b.shape())?;
    let dir_w = radial_direction(eps_w, r_w)?;
    let dir_b = radial_direction(eps_b, r_b)?;

    let sigma_w = tape.softplus(vars.rho_w)?;
    let d_w = tape.leaf(&dir_w);
    let dw = tape.mul(sigma_w, d_w)?;
    let w = tape.add(vars.mu_w, dw)?;

    let sigma_b = tape.softplus(vars.rho_b)?;
    let d_b = tape.leaf(&dir_b);
    let db = tape.mul(sigma_b, d_b)?;
    let b = tape.add(vars.mu_b, db)?;

    let wx = tape.matmul_t(x, w)?;
    tape.add_bias(wx, b)
}

/// `(eps / ‖eps‖) · r`, a pure function of the frozen draw.
pub(crate) fn radial_direction<F: Real>(eps: &Tensor<F>, r: F) -> Result<Tensor<F>> {
    let n = norm(eps.data());
    if n == F::zero() {
        return Err(Error::domain(
            "forward_radial",
            "zero-norm direction draw (resample upstream)",
        ));
    }
    let scale = r / n;
    let data = eps.data().iter().map(|&v| v * scale).collect();
    Tensor::new(eps.shape().to_vec(), data)
}

fn check_shape<F: Real>(op: &'static str, t: &Tensor<F>, expect: &[usize]) -> Result<()> {
    if t.shape() != expect {
        return Err(Error::Shape {
            op: match op {
                "forward_naive" => "forward_naive",
                "forward_lrt" => "forward_lrt",
                "forward_flipout" => "forward_flipout",
                _ => "forward_radial",
            },
            lhs: t.shape().to_vec(),
            rhs: expect.to_vec(),
        });
    }
    Ok(())
}
