use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::normal_vec;
use crate::scalar::{real, Real};
use rand::Rng;

/// Plain affine layer, `y = x Wᵀ + b`, with `W` stored out×in.
#[derive(Clone, Debug)]
pub struct LinearLayer<F: Real> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> LinearLayer<F> {
    pub fn new(w: Tensor<F>, b: Tensor<F>) -> Result<Self> {
        if w.shape().len() != 2 || b.shape().len() != 1 || w.shape()[0] != b.shape()[0] {
            return Err(Error::Shape {
                op: "linear::new",
                lhs: w.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        Ok(LinearLayer { w, b })
    }

    /// Fan-in-scaled normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let scale = real::<F>((2.0 / in_dim as f64).sqrt());
        let w: Vec<F> = normal_vec::<F, _>(rng, out_dim * in_dim)
            .into_iter()
            .map(|v| v * scale)
            .collect();
        LinearLayer {
            w: Tensor::new(vec![out_dim, in_dim], w).expect("consistent dims"),
            b: Tensor::zeros(vec![out_dim]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }
}

/// Bound parameter handles for one affine layer on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

pub fn bind_linear<F: Real>(
    tape: &mut Tape<F>,
    layer: &LinearLayer<F>,
    trainable: bool,
) -> LinearVars {
    let mut w = layer.w.clone();
    w.set_requires_grad(trainable);
    let mut b = layer.b.clone();
    b.set_requires_grad(trainable);
    LinearVars {
        w: tape.leaf(&w),
        b: tape.leaf(&b),
    }
}

pub fn forward_linear<F: Real>(tape: &mut Tape<F>, vars: LinearVars, x: Var) -> Result<Var> {
    let wx = tape.matmul_t(x, vars.w)?;
    tape.add_bias(wx, vars.b)
}
