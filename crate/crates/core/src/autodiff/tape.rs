use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// The primitive set. Shapes must conform per primitive; anything fancier
/// than bias-row or scalar broadcasting is rejected so every backward rule
/// stays auditable.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `(m×k)·(k×n)`, or `(m×k)·(n×k)ᵀ` when `trans_b`.
    Matmul { trans_b: bool },
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Log,
    Square,
    Sqrt,
    Softplus,
    Relu,
    /// Full reduction to a scalar.
    Sum,
    Mean,
    /// `[1] -> target` (scalar fill) or `[c] -> [r, c]` (bias over rows).
    Broadcast { target: Vec<usize> },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Matmul { .. } => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Square => "square",
            Primitive::Sqrt => "sqrt",
            Primitive::Softplus => "softplus",
            Primitive::Relu => "relu",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::Broadcast { .. } => "broadcast",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::Matmul { .. }
            | Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::Div => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
enum OpRecord {
    /// Input or constant; also the record kind for op outputs that carry no
    /// gradient (nothing upstream requires grad, so nothing is replayed).
    Leaf,
    Apply { op: Primitive, args: Vec<Var> },
}

#[derive(Clone, Debug)]
struct Node<F: Real> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    op: OpRecord,
}

/// Wengert tape: an ordered record of primitive applications.
///
/// Topological order holds by construction (an op's inputs always precede
/// it), and [`Tape::backward`] replays the record in one reverse sweep, so
/// each record is touched exactly once. A tape is confined to a single
/// execution context; independent tapes share no state.
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Enters a tensor as a leaf, copying its data. Gradients flow back to
    /// the leaf iff the tensor requires grad.
    pub fn leaf(&mut self, tensor: &Tensor<F>) -> Var {
        self.push(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            tensor.requires_grad(),
            OpRecord::Leaf,
        )
    }

    /// Constant leaf (no gradient).
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<F>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tape::constant",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(shape, data, false, OpRecord::Leaf))
    }

    pub fn scalar(&mut self, value: F) -> Var {
        self.push(vec![1], vec![value], false, OpRecord::Leaf)
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<F>, requires_grad: bool, op: OpRecord) -> Var {
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape_of(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].data
    }

    pub fn scalar_value(&self, v: Var) -> Result<F> {
        let node = &self.nodes[v.0];
        if node.data.len() != 1 {
            return Err(Error::Shape {
                op: "tape::scalar_value",
                lhs: node.shape.clone(),
                rhs: vec![1],
            });
        }
        Ok(node.data[0])
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn reset_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn has_non_finite(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| n.data.iter().any(|v| !v.is_finite()))
    }

    /// Applies a primitive, recording it when any input requires grad.
    pub fn apply(&mut self, op: Primitive, args: &[Var]) -> Result<Var> {
        if args.len() != op.arity() {
            return Err(Error::config(format!(
                "primitive `{}` takes {} input(s), got {}",
                op.name(),
                op.arity(),
                args.len()
            )));
        }
        for v in args {
            if v.0 >= self.nodes.len() {
                return Err(Error::config(format!(
                    "var #{} is not on this tape",
                    v.0
                )));
            }
        }
        let (shape, data) = self.eval(&op, args)?;
        let requires_grad = args.iter().any(|v| self.nodes[v.0].requires_grad);
        let record = if requires_grad {
            OpRecord::Apply {
                op,
                args: args.to_vec(),
            }
        } else {
            OpRecord::Leaf
        };
        Ok(self.push(shape, data, requires_grad, record))
    }

    fn eval(&self, op: &Primitive, args: &[Var]) -> Result<(Vec<usize>, Vec<F>)> {
        let a = &self.nodes[args[0].0];
        match op {
            Primitive::Matmul { trans_b } => {
                let b = &self.nodes[args[1].0];
                if a.shape.len() != 2 || b.shape.len() != 2 {
                    return Err(Error::Shape {
                        op: "matmul",
                        lhs: a.shape.clone(),
                        rhs: b.shape.clone(),
                    });
                }
                let (m, k) = (a.shape[0], a.shape[1]);
                let (rows, cols) = (b.shape[0], b.shape[1]);
                if *trans_b {
                    if k != cols {
                        return Err(Error::Shape {
                            op: "matmul",
                            lhs: a.shape.clone(),
                            rhs: b.shape.clone(),
                        });
                    }
                    Ok((vec![m, rows], mm_nt(&a.data, &b.data, m, k, rows)))
                } else {
                    if k != rows {
                        return Err(Error::Shape {
                            op: "matmul",
                            lhs: a.shape.clone(),
                            rhs: b.shape.clone(),
                        });
                    }
                    Ok((vec![m, cols], mm_nn(&a.data, &b.data, m, k, cols)))
                }
            }
            Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => {
                let b = &self.nodes[args[1].0];
                if a.shape != b.shape {
                    return Err(Error::Shape {
                        op: match op {
                            Primitive::Add => "add",
                            Primitive::Sub => "sub",
                            Primitive::Mul => "mul",
                            _ => "div",
                        },
                        lhs: a.shape.clone(),
                        rhs: b.shape.clone(),
                    });
                }
                let data = match op {
                    Primitive::Add => zip_map(&a.data, &b.data, |x, y| x + y),
                    Primitive::Sub => zip_map(&a.data, &b.data, |x, y| x - y),
                    Primitive::Mul => zip_map(&a.data, &b.data, |x, y| x * y),
                    _ => {
                        if b.data.iter().any(|v| *v == F::zero()) {
                            return Err(Error::domain("div", "division by zero"));
                        }
                        zip_map(&a.data, &b.data, |x, y| x / y)
                    }
                };
                Ok((a.shape.clone(), data))
            }
            Primitive::Exp => Ok((a.shape.clone(), a.data.iter().map(|x| x.exp()).collect())),
            Primitive::Log => {
                if a.data.iter().any(|v| *v <= F::zero()) {
                    return Err(Error::domain("log", "non-positive input"));
                }
                Ok((a.shape.clone(), a.data.iter().map(|x| x.ln()).collect()))
            }
            Primitive::Square => Ok((a.shape.clone(), a.data.iter().map(|x| *x * *x).collect())),
            Primitive::Sqrt => {
                // Zero is admitted (zero-variance edge cases); negatives are not.
                if a.data.iter().any(|v| *v < F::zero()) {
                    return Err(Error::domain("sqrt", "negative input"));
                }
                Ok((a.shape.clone(), a.data.iter().map(|x| x.sqrt()).collect()))
            }
            Primitive::Softplus => Ok((
                a.shape.clone(),
                a.data.iter().map(|x| softplus_stable(*x)).collect(),
            )),
            Primitive::Relu => Ok((
                a.shape.clone(),
                a.data
                    .iter()
                    .map(|x| if *x > F::zero() { *x } else { F::zero() })
                    .collect(),
            )),
            Primitive::Sum => {
                if a.data.is_empty() {
                    return Err(Error::domain("sum", "empty input"));
                }
                let s = a.data.iter().copied().fold(F::zero(), |acc, x| acc + x);
                Ok((vec![1], vec![s]))
            }
            Primitive::Mean => {
                if a.data.is_empty() {
                    return Err(Error::domain("mean", "empty input"));
                }
                let s = a.data.iter().copied().fold(F::zero(), |acc, x| acc + x);
                let n = real::<F>(a.data.len() as f64);
                Ok((vec![1], vec![s / n]))
            }
            Primitive::Broadcast { target } => {
                let n: usize = target.iter().product();
                if a.shape == *target {
                    Ok((target.clone(), a.data.clone()))
                } else if a.data.len() == 1 {
                    Ok((target.clone(), vec![a.data[0]; n]))
                } else if a.shape.len() == 1 && target.len() == 2 && target[1] == a.shape[0] {
                    let (rows, cols) = (target[0], target[1]);
                    let mut out = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        out.extend_from_slice(&a.data[..cols]);
                    }
                    Ok((target.clone(), out))
                } else {
                    Err(Error::Shape {
                        op: "broadcast",
                        lhs: a.shape.clone(),
                        rhs: target.clone(),
                    })
                }
            }
        }
    }

    /// Reverse sweep from a scalar output. Gradients of every participating
    /// node accumulate into its grad buffer, so calling backward twice
    /// doubles them (documented behavior, not an error).
    pub fn backward(&mut self, out: Var) -> Result<()> {
        if out.0 >= self.nodes.len() {
            return Err(Error::config(format!("var #{} is not on this tape", out.0)));
        }
        if self.nodes[out.0].data.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.nodes[out.0].shape.clone(),
                rhs: vec![1],
            });
        }
        let mut adjoint: Vec<Option<Vec<F>>> = vec![None; out.0 + 1];
        adjoint[out.0] = Some(vec![F::one()]);
        for i in (0..=out.0).rev() {
            let Some(up) = adjoint[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let OpRecord::Apply { op, args } = &self.nodes[i].op {
                let op = op.clone();
                let args = args.clone();
                for (arg, contrib) in self.op_backward(&op, &args, i, &up) {
                    let buf = adjoint[arg.0]
                        .get_or_insert_with(|| vec![F::zero(); self.nodes[arg.0].data.len()]);
                    for (g, d) in buf.iter_mut().zip(&contrib) {
                        *g += *d;
                    }
                }
            }
            let node = &mut self.nodes[i];
            let grad = node.grad.get_or_insert_with(|| vec![F::zero(); up.len()]);
            for (g, d) in grad.iter_mut().zip(&up) {
                *g += *d;
            }
        }
        Ok(())
    }

    /// Per-input adjoint contributions of one recorded application.
    fn op_backward(
        &self,
        op: &Primitive,
        args: &[Var],
        out_idx: usize,
        up: &[F],
    ) -> Vec<(Var, Vec<F>)> {
        let two = real::<F>(2.0);
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let out_data = &self.nodes[out_idx].data;
        let a_data = &self.nodes[args[0].0].data;
        let mut contribs = Vec::with_capacity(2);
        match op {
            Primitive::Matmul { trans_b } => {
                let b_data = &self.nodes[args[1].0].data;
                let a_shape = &self.nodes[args[0].0].shape;
                let b_shape = &self.nodes[args[1].0].shape;
                let (m, k) = (a_shape[0], a_shape[1]);
                if *trans_b {
                    let n = b_shape[0];
                    if needs(args[0]) {
                        contribs.push((args[0], mm_nn(up, b_data, m, n, k)));
                    }
                    if needs(args[1]) {
                        contribs.push((args[1], mm_tn(up, a_data, m, n, k)));
                    }
                } else {
                    let n = b_shape[1];
                    if needs(args[0]) {
                        contribs.push((args[0], mm_nt(up, b_data, m, n, k)));
                    }
                    if needs(args[1]) {
                        contribs.push((args[1], mm_tn(a_data, up, m, k, n)));
                    }
                }
            }
            Primitive::Add => {
                for &arg in args.iter().take(2) {
                    if needs(arg) {
                        contribs.push((arg, up.to_vec()));
                    }
                }
            }
            Primitive::Sub => {
                if needs(args[0]) {
                    contribs.push((args[0], up.to_vec()));
                }
                if needs(args[1]) {
                    contribs.push((args[1], up.iter().map(|g| -*g).collect()));
                }
            }
            Primitive::Mul => {
                let b_data = &self.nodes[args[1].0].data;
                if needs(args[0]) {
                    contribs.push((args[0], zip_map(up, b_data, |g, y| g * y)));
                }
                if needs(args[1]) {
                    contribs.push((args[1], zip_map(up, a_data, |g, x| g * x)));
                }
            }
            Primitive::Div => {
                let b_data = &self.nodes[args[1].0].data;
                if needs(args[0]) {
                    contribs.push((args[0], zip_map(up, b_data, |g, y| g / y)));
                }
                if needs(args[1]) {
                    let c: Vec<F> = up
                        .iter()
                        .zip(out_data.iter().zip(b_data))
                        .map(|(g, (o, y))| -*g * *o / *y)
                        .collect();
                    contribs.push((args[1], c));
                }
            }
            Primitive::Exp => {
                if needs(args[0]) {
                    contribs.push((args[0], zip_map(up, out_data, |g, o| g * o)));
                }
            }
            Primitive::Log => {
                if needs(args[0]) {
                    contribs.push((args[0], zip_map(up, a_data, |g, x| g / x)));
                }
            }
            Primitive::Square => {
                if needs(args[0]) {
                    contribs.push((args[0], zip_map(up, a_data, |g, x| two * g * x)));
                }
            }
            Primitive::Sqrt => {
                if needs(args[0]) {
                    // Subgradient 0 at a zero radicand (only reachable through
                    // zero-variance degenerate inputs).
                    let c: Vec<F> = up
                        .iter()
                        .zip(out_data)
                        .map(|(g, o)| {
                            if *o == F::zero() {
                                F::zero()
                            } else {
                                *g / (two * *o)
                            }
                        })
                        .collect();
                    contribs.push((args[0], c));
                }
            }
            Primitive::Softplus => {
                if needs(args[0]) {
                    contribs.push((args[0], zip_map(up, a_data, |g, x| g * sigmoid_stable(x))));
                }
            }
            Primitive::Relu => {
                if needs(args[0]) {
                    contribs.push((
                        args[0],
                        zip_map(up, a_data, |g, x| if x > F::zero() { g } else { F::zero() }),
                    ));
                }
            }
            Primitive::Sum => {
                if needs(args[0]) {
                    contribs.push((args[0], vec![up[0]; a_data.len()]));
                }
            }
            Primitive::Mean => {
                if needs(args[0]) {
                    let scale = up[0] / real::<F>(a_data.len() as f64);
                    contribs.push((args[0], vec![scale; a_data.len()]));
                }
            }
            Primitive::Broadcast { target } => {
                if needs(args[0]) {
                    let src_shape = &self.nodes[args[0].0].shape;
                    let grad = if *src_shape == *target {
                        up.to_vec()
                    } else if a_data.len() == 1 {
                        vec![up.iter().copied().fold(F::zero(), |acc, x| acc + x)]
                    } else {
                        let (rows, cols) = (target[0], target[1]);
                        let mut g = vec![F::zero(); cols];
                        for r in 0..rows {
                            let row = &up[r * cols..(r + 1) * cols];
                            for (gj, uj) in g.iter_mut().zip(row) {
                                *gj += *uj;
                            }
                        }
                        g
                    };
                    contribs.push((args[0], grad));
                }
            }
        }
        contribs
    }

    // Named wrappers, used pervasively by the layer and objective builders.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Matmul { trans_b: false }, &[a, b])
    }

    /// `a · bᵀ` — the matmul primitive with its orientation flag set.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Matmul { trans_b: true }, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Div, &[a, b])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Log, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Square, &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sqrt, &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Softplus, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn broadcast(&mut self, a: Var, target: &[usize]) -> Result<Var> {
        self.apply(
            Primitive::Broadcast {
                target: target.to_vec(),
            },
            &[a],
        )
    }

    /// Bias-row add: `(r×c) + (c)` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let target = self.shape_of(a).to_vec();
        let b = self.broadcast(bias, &target)?;
        self.add(a, b)
    }

    /// `x * c` with a constant scalar.
    pub fn scale(&mut self, a: Var, c: F) -> Result<Var> {
        let s = self.scalar(c);
        let target = self.shape_of(a).to_vec();
        let b = self.broadcast(s, &target)?;
        self.mul(a, b)
    }

    /// `x + c` with a constant scalar.
    pub fn add_scalar(&mut self, a: Var, c: F) -> Result<Var> {
        let s = self.scalar(c);
        let target = self.shape_of(a).to_vec();
        let b = self.broadcast(s, &target)?;
        self.add(a, b)
    }
}

#[inline]
fn zip_map<F: Real>(a: &[F], b: &[F], f: impl Fn(F, F) -> F) -> Vec<F> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

/// `C = A·B`, A: m×k, B: k×n.
fn mm_nn<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
    out
}

/// `C = A·Bᵀ`, A: m×k, B: n×k, C: m×n.
fn mm_nt<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc = acc + x * y;
            }
            *o = acc;
        }
    }
    out
}

/// `C = Aᵀ·B`, A: r×s, B: r×t, C: s×t.
fn mm_tn<F: Real>(a: &[F], b: &[F], r: usize, s: usize, t: usize) -> Vec<F> {
    let mut out = vec![F::zero(); s * t];
    for p in 0..r {
        let a_row = &a[p * s..(p + 1) * s];
        let b_row = &b[p * t..(p + 1) * t];
        for (i, &a_pi) in a_row.iter().enumerate() {
            let out_row = &mut out[i * t..(i + 1) * t];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_pi * b_pj;
            }
        }
    }
    out
}

/// `ln(1 + e^x)` without overflow for large |x|.
#[inline]
pub(crate) fn softplus_stable<F: Real>(x: F) -> F {
    let zero = F::zero();
    if x > zero {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid_stable<F: Real>(x: F) -> F {
    let one = F::one();
    if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}
