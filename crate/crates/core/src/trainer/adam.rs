use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Adam optimizer state over a fixed parameter list.
pub struct AdamState<F: Real> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
}

impl<F: Real> AdamState<F> {
    pub fn new(param_sizes: &[usize], lr: F) -> Result<Self> {
        if lr <= F::zero() {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(AdamState {
            m: param_sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: param_sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            t: 0,
            lr,
            beta1: real(0.9),
            beta2: real(0.999),
            eps: real(1e-8),
        })
    }

    /// One Adam update with bias correction. Rejects non-finite gradients so
    /// a diverged step surfaces instead of corrupting the parameters.
    pub fn step(&mut self, params: &mut [&mut Tensor<F>], grads: &[&[F]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config("adam state does not match parameter list"));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("non-finite gradient in adam step"));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let one = F::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (one - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *x = *x - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = Tensor::new(vec![3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let before = p.data().to_vec();
        let mut state = AdamState::new(&[3], 0.01).unwrap();
        state.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p.data(), before.as_slice());
    }

    #[test]
    fn constant_gradient_step_approaches_lr_times_sign() {
        let mut p = Tensor::new(vec![1], vec![0.0f64]).unwrap();
        let mut state = AdamState::new(&[1], 0.01).unwrap();
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..500 {
            state.step(&mut [&mut p], &[&[3.0]]).unwrap();
            step = prev - p.data()[0];
            prev = p.data()[0];
        }
        assert!((step - 0.01).abs() < 1e-6, "asymptotic step {step}");
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = Tensor::new(vec![4], vec![1.0f64, -2.0, 0.7, 1.5]).unwrap();
        let mut state = AdamState::new(&[4], 1e-2).unwrap();
        for _ in 0..2000 {
            let g: Vec<f64> = p.data().iter().map(|x| 2.0 * x).collect();
            state.step(&mut [&mut p], &[&g]).unwrap();
        }
        let norm: f64 = p.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "final norm {norm}");
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut p = Tensor::new(vec![1], vec![0.0f64]).unwrap();
        let mut state = AdamState::new(&[1], 0.01).unwrap();
        assert!(state.step(&mut [&mut p], &[&[f64::NAN]]).is_err());
    }
}
