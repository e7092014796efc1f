//! Monte Carlo oracle for the closed-form diagonal-Gaussian KL.

use rulkit_core::autodiff::{Tape, Tensor};
use rulkit_core::objectives::kl_diag_gaussians;
use rulkit_core::rng::{normal_vec, stream};

fn closed_form(mu: &[f64], sigma: &[f64], prior: f64) -> f64 {
    let mut tape: Tape<f64> = Tape::new();
    let m = tape.leaf(&Tensor::new(vec![mu.len()], mu.to_vec()).unwrap());
    let s = tape.leaf(&Tensor::new(vec![sigma.len()], sigma.to_vec()).unwrap());
    let kl = kl_diag_gaussians(&mut tape, m, s, prior).unwrap();
    tape.scalar_value(kl).unwrap()
}

/// `E_q[log q - log p]` by direct sampling; returns (estimate, standard error).
fn mc_estimate(mu: &[f64], sigma: &[f64], prior: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed, 300);
    let dim = mu.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let eps: Vec<f64> = normal_vec(&mut rng, dim);
        let mut ratio = 0.0;
        for i in 0..dim {
            let w = mu[i] + sigma[i] * eps[i];
            let log_q = -sigma[i].ln() - eps[i] * eps[i] / 2.0;
            let log_p = -prior.ln() - w * w / (2.0 * prior * prior);
            ratio += log_q - log_p;
        }
        sum += ratio;
        sum_sq += ratio * ratio;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = sum_sq / n - mean * mean;
    (mean, (var / n).sqrt())
}

#[test]
fn closed_form_kl_matches_mc_oracle_on_random_cases() {
    let mut rng = stream(2024, 301);
    for case in 0..10u64 {
        let mu: Vec<f64> = normal_vec::<f64, _>(&mut rng, 10)
            .iter()
            .map(|v| v * 0.8)
            .collect();
        let sigma: Vec<f64> = normal_vec::<f64, _>(&mut rng, 10)
            .iter()
            .map(|v| 0.3 + 0.5 * v.abs())
            .collect();
        let prior = 0.5 + 0.1 * case as f64;
        let exact = closed_form(&mu, &sigma, prior);
        let (mc, se) = mc_estimate(&mu, &sigma, prior, 1_000_000, 400 + case);
        assert!(
            (exact - mc).abs() < 3.0 * se,
            "case {case}: closed {exact} vs mc {mc} (se {se})"
        );
    }
}
