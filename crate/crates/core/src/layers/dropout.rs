use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::bernoulli_vec;
use crate::scalar::{real, Real};
use rand::Rng;

/// Dropout with inverted scaling. Masks are resampled per forward pass at
/// both train and test time; keep probability is `1 - p`.
#[derive(Clone, Copy, Debug)]
pub struct DropoutLayer {
    p: f64,
    width: usize,
}

impl DropoutLayer {
    pub fn new(p: f64, width: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        Ok(DropoutLayer { p, width })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// One 0/1 mask per batch row.
    pub fn sample_mask<F: Real, R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Tensor<F> {
        let data = bernoulli_vec::<F, _>(rng, batch * self.width, 1.0 - self.p);
        Tensor::new(vec![batch, self.width], data).expect("consistent dims")
    }
}

/// `x ⊙ mask / (1 - p)` so the expectation of the output equals `x`.
pub fn forward_dropout<F: Real>(
    tape: &mut Tape<F>,
    layer: &DropoutLayer,
    x: Var,
    mask: &Tensor<F>,
) -> Result<Var> {
    if mask.shape() != tape.shape_of(x) {
        return Err(Error::Shape {
            op: "dropout",
            lhs: tape.shape_of(x).to_vec(),
            rhs: mask.shape().to_vec(),
        });
    }
    if mask
        .data()
        .iter()
        .any(|&v| v != F::zero() && v != F::one())
    {
        return Err(Error::domain("dropout", "mask entries must be 0 or 1"));
    }
    let m = tape.leaf(mask);
    let kept = tape.mul(x, m)?;
    tape.scale(kept, real::<F>(1.0 / (1.0 - layer.p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rejects_p_of_one_or_more() {
        assert!(DropoutLayer::new(1.0, 4).is_err());
        assert!(DropoutLayer::new(-0.1, 4).is_err());
        assert!(DropoutLayer::new(0.0, 4).is_ok());
    }

    #[test]
    fn p_zero_is_identity() {
        let layer = DropoutLayer::new(0.0, 3).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let x = tape
            .constant(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0])
            .unwrap();
        let mask = layer.sample_mask::<f64, _>(2, &mut stream(1, 1));
        assert!(mask.data().iter().all(|&v| v == 1.0));
        let y = forward_dropout(&mut tape, &layer, x, &mask).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn all_ones_mask_scales_by_keep_prob() {
        let layer = DropoutLayer::new(0.25, 2).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.constant(vec![1, 2], vec![3.0, -1.5]).unwrap();
        let mask = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let y = forward_dropout(&mut tape, &layer, x, &mask).unwrap();
        assert_eq!(tape.value(y), &[3.0 / 0.75, -1.5 / 0.75]);
    }

    #[test]
    fn mask_expectation_preserves_input() {
        let layer = DropoutLayer::new(0.4, 1).unwrap();
        let mut rng = stream(5, 2);
        let x = 2.5f64;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let mask = layer.sample_mask::<f64, _>(1, &mut rng);
            let y = x * mask.data()[0] / 0.6;
            sum += y;
            sum_sq += y * y;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - x).abs() < 3.0 * se,
            "mean {mean} vs {x} (se {se})"
        );
    }

    #[test]
    fn non_binary_mask_is_rejected() {
        let layer = DropoutLayer::new(0.5, 1).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.constant(vec![1, 1], vec![1.0]).unwrap();
        let mask = Tensor::new(vec![1, 1], vec![0.5]).unwrap();
        assert!(forward_dropout(&mut tape, &layer, x, &mask).is_err());
    }
}
