//! Minimal reverse-mode automatic differentiation over dense real tensors.
//!
//! The primitive set is deliberately small (dense matmul, elementwise
//! arithmetic, a few nonlinearities, full reductions, bias/scalar
//! broadcast) — exactly what the layers and objectives in this crate need,
//! nothing more. Stochastic layers take their noise as explicit constant
//! inputs, so gradients are plain reparametrization gradients and finite
//! differences check them exactly.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_params};
pub use tape::{Primitive, Tape, Var};
pub(crate) use tape::softplus_stable;
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::rng::{normal_vec, stream};
    use crate::scalar::real;

    fn t64(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn softplus_of_zero_is_ln_two() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.scalar(0.0);
        let y = tape.softplus(x).unwrap();
        assert!((tape.scalar_value(y).unwrap() - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn square_of_three_is_nine() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.scalar(3.0);
        let y = tape.square(x).unwrap();
        assert_eq!(tape.scalar_value(y).unwrap(), 9.0);
    }

    #[test]
    fn matmul_of_ones_gives_row_sums() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.constant(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = tape.constant(vec![3, 1], vec![1.0; 3]).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape_of(c), &[2, 1]);
        assert_eq!(tape.value(c), &[3.0, 3.0]);
    }

    #[test]
    fn matmul_transpose_b_matches_explicit_transpose() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.constant(vec![2, 3], (1..=6).map(f64::from).collect()).unwrap();
        // b is 4x3; a · bᵀ is 2x4
        let b_vals: Vec<f64> = (1..=12).map(f64::from).collect();
        let b = tape.constant(vec![4, 3], b_vals.clone()).unwrap();
        let c = tape.matmul_t(a, b).unwrap();
        let mut bt = vec![0.0; 12];
        for r in 0..4 {
            for col in 0..3 {
                bt[col * 4 + r] = b_vals[r * 3 + col];
            }
        }
        let b2 = tape.constant(vec![3, 4], bt).unwrap();
        let c2 = tape.matmul(a, b2).unwrap();
        assert_eq!(tape.value(c), tape.value(c2));
    }

    #[test]
    fn backward_of_square_at_three_is_six() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0).with_grad());
        let y = tape.square(x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_of_softplus_at_zero_is_half() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(&Tensor::scalar(0.0).with_grad());
        let y = tape.softplus(x).unwrap();
        tape.backward(y).unwrap();
        assert!((tape.grad(x).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(&t64(vec![2], vec![1.0, 2.0]).with_grad());
        let y = tape.square(x).unwrap();
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn backward_twice_accumulates_grads() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0).with_grad());
        let y = tape.square(x).unwrap();
        tape.backward(y).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[12.0]);
        tape.reset_grads();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn sum_and_mean_gradients_are_exact_constants() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(&t64(vec![5], vec![0.3, -1.0, 2.0, 4.5, 9.0]).with_grad());
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 5]);

        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(&t64(vec![5], vec![0.3, -1.0, 2.0, 4.5, 9.0]).with_grad());
        let m = tape.mean(x).unwrap();
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0 / 5.0; 5]);
    }

    #[test]
    fn shape_mismatch_names_primitive_and_shapes() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = tape.constant(vec![2, 2], vec![0.0; 4]).unwrap();
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul"), "{msg}");
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn log_and_sqrt_domains() {
        let mut tape: Tape<f64> = Tape::new();
        let neg = tape.constant(vec![1], vec![-1.0]).unwrap();
        assert!(tape.log(neg).is_err());
        assert!(tape.sqrt(neg).is_err());
        let zero = tape.constant(vec![1], vec![0.0]).unwrap();
        assert!(tape.log(zero).is_err());
        // Zero radicand is admitted (degenerate zero-variance inputs).
        assert!(tape.sqrt(zero).is_ok());
    }

    #[test]
    fn ops_without_grad_inputs_are_not_replayed() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.constant(vec![2], vec![1.0, 2.0]).unwrap();
        let b = tape.square(a).unwrap();
        let x = tape.leaf(&t64(vec![2], vec![3.0, 4.0]).with_grad());
        let y = tape.mul(b, x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 4.0]);
        assert!(tape.grad(b).is_none());
    }

    #[test]
    fn grad_check_of_sum_is_zero_error() {
        let x = t64(vec![4], vec![0.5, -1.5, 2.0, 0.1]);
        let err = grad_check(|tape, v| tape.sum(v), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn grad_check_flags_non_finite() {
        let x = t64(vec![1], vec![2.0]);
        let res = grad_check(
            |tape, v| {
                let big = tape.scale(v, 1e308)?;
                let sq = tape.square(big)?; // overflows to inf
                tape.sum(sq)
            },
            &x,
            1e-5,
        );
        assert!(res.is_err());
    }

    /// Every primitive against central differences on random inputs in
    /// [-2, 2] (shifted into the valid domain for log/sqrt/div).
    #[test]
    fn primitives_match_finite_differences() {
        let mut rng = stream(42, 900);
        let step = 1e-5;
        let tol = 1e-4;
        for trial in 0..100 {
            let raw: Vec<f64> = normal_vec::<f64, _>(&mut rng, 6)
                .iter()
                .map(|v| (v * 0.8).clamp(-2.0, 2.0))
                .collect();
            let pos: Vec<f64> = raw.iter().map(|v| v.abs() + 0.3).collect();
            let x = t64(vec![2, 3], raw.clone());
            let xp = t64(vec![2, 3], pos.clone());
            let y = t64(vec![2, 3], normal_vec::<f64, _>(&mut rng, 6));
            let yp = t64(vec![2, 3], pos.iter().map(|v| v + 0.2).collect());
            let b = t64(vec![3, 4], normal_vec::<f64, _>(&mut rng, 12));
            let bias = t64(vec![3], normal_vec::<f64, _>(&mut rng, 3));

            let cases: Vec<(&str, f64)> = vec![
                (
                    "matmul",
                    grad_check_params(
                        |t, vs| {
                            let c = t.matmul(vs[0], vs[1])?;
                            t.sum(c)
                        },
                        &[x.clone(), b.clone()],
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "matmul_t",
                    grad_check_params(
                        |t, vs| {
                            let c = t.matmul_t(vs[0], vs[1])?;
                            t.sum(c)
                        },
                        &[t64(vec![2, 4], normal_vec::<f64, _>(&mut stream(7, trial), 8)), b.clone()],
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "add",
                    grad_check_params(
                        |t, vs| {
                            let c = t.add(vs[0], vs[1])?;
                            let sq = t.square(c)?;
                            t.sum(sq)
                        },
                        &[x.clone(), y.clone()],
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "sub",
                    grad_check_params(
                        |t, vs| {
                            let c = t.sub(vs[0], vs[1])?;
                            let sq = t.square(c)?;
                            t.sum(sq)
                        },
                        &[x.clone(), y.clone()],
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "mul",
                    grad_check_params(
                        |t, vs| {
                            let c = t.mul(vs[0], vs[1])?;
                            t.sum(c)
                        },
                        &[x.clone(), y.clone()],
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "div",
                    grad_check_params(
                        |t, vs| {
                            let c = t.div(vs[0], vs[1])?;
                            t.sum(c)
                        },
                        &[x.clone(), yp.clone()],
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "exp",
                    grad_check(
                        |t, v| {
                            let c = t.exp(v)?;
                            t.sum(c)
                        },
                        &x,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "log",
                    grad_check(
                        |t, v| {
                            let c = t.log(v)?;
                            t.sum(c)
                        },
                        &xp,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "square",
                    grad_check(
                        |t, v| {
                            let c = t.square(v)?;
                            t.sum(c)
                        },
                        &x,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "sqrt",
                    grad_check(
                        |t, v| {
                            let c = t.sqrt(v)?;
                            t.sum(c)
                        },
                        &xp,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "softplus",
                    grad_check(
                        |t, v| {
                            let c = t.softplus(v)?;
                            t.sum(c)
                        },
                        &x,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    // Keep inputs away from the kink so the FD stencil stays valid.
                    "relu",
                    grad_check(
                        |t, v| {
                            let c = t.relu(v)?;
                            t.sum(c)
                        },
                        &xp,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "mean",
                    grad_check(
                        |t, v| {
                            let sq = t.square(v)?;
                            t.mean(sq)
                        },
                        &x,
                        step,
                    )
                    .unwrap(),
                ),
                (
                    "broadcast",
                    grad_check(
                        |t, v| {
                            let big = t.broadcast(v, &[4, 3])?;
                            let sq = t.square(big)?;
                            t.sum(sq)
                        },
                        &bias,
                        step,
                    )
                    .unwrap(),
                ),
            ];
            for (name, err) in cases {
                assert!(err < tol, "primitive {name} trial {trial}: err {err}");
            }
        }
    }

    /// A random 3-layer network's scalar loss against finite differences.
    #[test]
    fn three_layer_net_matches_finite_differences() {
        let mut rng = stream(11, 901);
        let x = t64(vec![4, 3], normal_vec::<f64, _>(&mut rng, 12));
        let w1 = t64(vec![5, 3], normal_vec::<f64, _>(&mut rng, 15));
        let b1 = t64(vec![5], normal_vec::<f64, _>(&mut rng, 5));
        let w2 = t64(vec![4, 5], normal_vec::<f64, _>(&mut rng, 20));
        let b2 = t64(vec![4], normal_vec::<f64, _>(&mut rng, 4));
        let w3 = t64(vec![1, 4], normal_vec::<f64, _>(&mut rng, 4));
        let b3 = t64(vec![1], normal_vec::<f64, _>(&mut rng, 1));
        let xc = x.clone();

        let f = move |t: &mut Tape<f64>, vs: &[Var]| -> Result<Var> {
            let xin = t.leaf(&xc);
            let h1 = t.matmul_t(xin, vs[0])?;
            let h1 = t.add_bias(h1, vs[1])?;
            let h1 = t.softplus(h1)?;
            let h2 = t.matmul_t(h1, vs[2])?;
            let h2 = t.add_bias(h2, vs[3])?;
            let h2 = t.relu(h2)?;
            let out = t.matmul_t(h2, vs[4])?;
            let out = t.add_bias(out, vs[5])?;
            let sq = t.square(out)?;
            t.mean(sq)
        };
        let err = grad_check_params(f, &[w1, b1, w2, b2, w3, b3], 1e-5).unwrap();
        assert!(err < 1e-4, "err = {err}");
    }

    #[test]
    fn identical_tapes_produce_bit_identical_gradients() {
        let run = || {
            let mut tape: Tape<f64> = Tape::new();
            let x = tape.leaf(&t64(vec![2, 2], vec![0.7, -0.3, 1.9, 0.2]).with_grad());
            let w = tape.leaf(&t64(vec![2, 2], vec![0.1, 0.4, -0.9, 1.3]).with_grad());
            let h = tape.matmul(x, w).unwrap();
            let h = tape.softplus(h).unwrap();
            let l = tape.mean(h).unwrap();
            tape.backward(l).unwrap();
            (tape.grad(x).unwrap().to_vec(), tape.grad(w).unwrap().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn generic_scalar_instantiates_f32() {
        let mut tape: Tape<f32> = Tape::new();
        let x = tape.leaf(&Tensor::<f32>::scalar(real(3.0)).with_grad());
        let y = tape.square(x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0f32]);
    }
}
