use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Max relative disagreement between the tape gradient of a scalar-valued
/// function and central finite differences:
/// `max_i |analytic_i - fd_i| / (|fd_i| + 1e-8)`.
pub fn grad_check<F: Real>(
    f: impl Fn(&mut Tape<F>, Var) -> Result<Var>,
    x: &Tensor<F>,
    step: F,
) -> Result<F> {
    grad_check_params(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), step)
}

/// Multi-input variant of [`grad_check`]; the maximum runs over every
/// coordinate of every input.
pub fn grad_check_params<F: Real>(
    f: impl Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
    params: &[Tensor<F>],
    step: F,
) -> Result<F> {
    if step <= F::zero() {
        return Err(Error::domain("grad_check", "step must be positive"));
    }

    // Analytic gradients via one recorded forward + backward.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.set_requires_grad(true);
            tape.leaf(&p)
        })
        .collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).len() != 1 {
        return Err(Error::Shape {
            op: "grad_check",
            lhs: tape.shape_of(out).to_vec(),
            rhs: vec![1],
        });
    }
    if tape.has_non_finite() {
        return Err(Error::numeric("non-finite intermediate in grad_check"));
    }
    tape.backward(out)?;
    let analytic: Vec<Vec<F>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            tape.grad(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![F::zero(); p.len()])
        })
        .collect();

    let eval = |points: &[Tensor<F>]| -> Result<F> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = points
            .iter()
            .map(|p| {
                let mut p = p.clone();
                p.set_requires_grad(false);
                tape.leaf(&p)
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.scalar_value(out)?;
        if !v.is_finite() || tape.has_non_finite() {
            return Err(Error::numeric("non-finite intermediate in grad_check"));
        }
        Ok(v)
    };

    let floor: F = real(1e-8);
    let two = real::<F>(2.0);
    let mut worst = F::zero();
    let mut perturbed: Vec<Tensor<F>> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for i in 0..param.len() {
            let base = param.data()[i];
            perturbed[pi].data_mut()[i] = base + step;
            let plus = eval(&perturbed)?;
            perturbed[pi].data_mut()[i] = base - step;
            let minus = eval(&perturbed)?;
            perturbed[pi].data_mut()[i] = base;
            let fd = (plus - minus) / (two * step);
            let rel = (analytic[pi][i] - fd).abs() / (fd.abs() + floor);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
