//! Distributional checks on the variational samplers: moment equivalence
//! against analytic Gaussian moments, flipout per-example decorrelation
//! (with the naive sampler as positive control), and the radial
//! direction-radius law.

use rulkit_core::autodiff::{Tape, Tensor};
use rulkit_core::layers::{
    bind_variational, forward_variational, softplus_scale, SamplerKind, VariationalLinear,
    VariationalNoise,
};
use rulkit_core::rng::stream;

const IN_DIM: usize = 3;
const OUT_DIM: usize = 2;

fn layer(sampler: SamplerKind) -> VariationalLinear<f64> {
    VariationalLinear::new(
        Tensor::new(vec![2, 3], vec![0.5, -0.2, 0.8, 0.1, 0.9, -0.4]).unwrap(),
        Tensor::new(vec![2, 3], vec![-1.0, -0.5, 0.0, -2.0, -1.5, 0.5]).unwrap(),
        Tensor::new(vec![2], vec![0.3, -0.6]).unwrap(),
        Tensor::new(vec![2], vec![-1.2, -0.8]).unwrap(),
        1.0,
        sampler,
    )
    .unwrap()
}

fn batch_x() -> Tensor<f64> {
    Tensor::new(vec![2, 3], vec![1.0, 0.5, 2.0, 0.8, 1.5, 0.2]).unwrap()
}

/// Analytic output mean and variance of one unit for one row:
/// mean = mu_W x + mu_b, var = sum_j x_j^2 sigma_j^2 + sigma_b^2.
fn analytic_moments(l: &VariationalLinear<f64>, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sw = softplus_scale(&l.rho_w);
    let sb = softplus_scale(&l.rho_b);
    let mut mean = vec![0.0; OUT_DIM];
    let mut var = vec![0.0; OUT_DIM];
    for i in 0..OUT_DIM {
        for j in 0..IN_DIM {
            mean[i] += l.mu_w.data()[i * IN_DIM + j] * x[j];
            let s = sw.data()[i * IN_DIM + j];
            var[i] += x[j] * x[j] * s * s;
        }
        mean[i] += l.mu_b.data()[i];
        var[i] += sb.data()[i] * sb.data()[i];
    }
    (mean, var)
}

fn draw_outputs(sampler: SamplerKind, n: usize, seed: u64) -> Vec<[f64; 4]> {
    let l = layer(sampler);
    let x = batch_x();
    let mut rng = stream(seed, 100);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let noise = VariationalNoise::sample(&l, 2, &mut rng);
        let mut tape: Tape<f64> = Tape::new();
        let vars = bind_variational(&mut tape, &l, false);
        let xv = tape.leaf(&x);
        let y = forward_variational(&mut tape, &l, vars, xv, &noise).unwrap();
        let v = tape.value(y);
        out.push([v[0], v[1], v[2], v[3]]);
    }
    out
}

fn mean_and_var(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn samplers_match_analytic_moments_within_three_se() {
    let n = 100_000;
    let l = layer(SamplerKind::Naive);
    let x = batch_x();
    for (si, sampler) in [SamplerKind::Naive, SamplerKind::Lrt, SamplerKind::Flipout]
        .into_iter()
        .enumerate()
    {
        let draws = draw_outputs(sampler, n, 7 + si as u64);
        for row in 0..2 {
            let (mean_ref, var_ref) = analytic_moments(&l, &x.data()[row * 3..row * 3 + 3]);
            for unit in 0..OUT_DIM {
                let vals: Vec<f64> = draws.iter().map(|d| d[row * 2 + unit]).collect();
                let (m, v) = mean_and_var(&vals);
                let se_mean = (var_ref[unit] / n as f64).sqrt();
                let se_var = var_ref[unit] * (2.0 / (n as f64 - 1.0)).sqrt();
                assert!(
                    (m - mean_ref[unit]).abs() < 3.0 * se_mean,
                    "{sampler:?} row {row} unit {unit}: mean {m} vs {} (se {se_mean})",
                    mean_ref[unit]
                );
                assert!(
                    (v - var_ref[unit]).abs() < 3.0 * se_var,
                    "{sampler:?} row {row} unit {unit}: var {v} vs {} (se {se_var})",
                    var_ref[unit]
                );
            }
        }
    }
}

/// Empirical covariance between the two rows' perturbations of output unit 0,
/// and its standard error.
fn cross_row_cov(sampler: SamplerKind, n: usize, seed: u64) -> (f64, f64) {
    let l = layer(sampler);
    let x = batch_x();
    let (m0, _) = analytic_moments(&l, &x.data()[0..3]);
    let (m1, _) = analytic_moments(&l, &x.data()[3..6]);
    let draws = draw_outputs(sampler, n, seed);
    let a: Vec<f64> = draws.iter().map(|d| d[0] - m0[0]).collect();
    let b: Vec<f64> = draws.iter().map(|d| d[2] - m1[0]).collect();
    let nf = n as f64;
    let cov = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / nf;
    let (_, va) = mean_and_var(&a);
    let (_, vb) = mean_and_var(&b);
    let se = ((va * vb + cov * cov) / nf).sqrt();
    (cov, se)
}

#[test]
fn flipout_decorrelates_rows_while_naive_does_not() {
    let n = 100_000;
    let (cov_fo, se_fo) = cross_row_cov(SamplerKind::Flipout, n, 31);
    assert!(
        cov_fo.abs() < 3.0 * se_fo,
        "flipout cross-row cov {cov_fo} exceeds 3 se {se_fo}"
    );
    // Positive control: the shared naive draw correlates rows strongly.
    let (cov_naive, se_naive) = cross_row_cov(SamplerKind::Naive, n, 32);
    assert!(
        cov_naive > 3.0 * se_naive,
        "naive cross-row cov {cov_naive} not significantly positive (se {se_naive})"
    );
}

/// Abramowitz & Stegun 7.1.26 rational approximation (|err| < 1.5e-7) —
/// an oracle independent of the library's own special functions.
fn erf_oracle(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

#[test]
fn radial_norm_is_half_normal_by_ks_test() {
    let l = layer(SamplerKind::Radial);
    let sw = softplus_scale(&l.rho_w);
    let n = 10_000;
    let mut rng = stream(5, 200);
    let mut norms = Vec::with_capacity(n);
    let dim = OUT_DIM * IN_DIM;
    let mut coord_sums = vec![0.0; dim];
    for _ in 0..n {
        let VariationalNoise::Radial { eps_w, r_w, .. } = VariationalNoise::sample(&l, 1, &mut rng)
        else {
            panic!("sampler mismatch")
        };
        // w = mu + sigma ⊙ (eps/||eps||) r  =>  (w - mu) ⊘ sigma = (eps/||eps||) r
        let norm_eps = eps_w.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let z: Vec<f64> = eps_w.data().iter().map(|v| v / norm_eps * r_w).collect();
        let _ = &sw; // sigma cancels exactly in (w - mu) ⊘ sigma
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        norms.push(nz);
        for (s, v) in coord_sums.iter_mut().zip(&z) {
            *s += v / nz;
        }
    }
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ks: f64 = 0.0;
    for (i, v) in norms.iter().enumerate() {
        let cdf = erf_oracle(v / std::f64::consts::SQRT_2);
        let hi = (i + 1) as f64 / n as f64;
        let lo = i as f64 / n as f64;
        ks = ks.max((cdf - lo).abs()).max((cdf - hi).abs());
    }
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(ks < critical, "KS statistic {ks} >= critical {critical}");

    // Direction symmetry: each normalized coordinate has mean zero. The
    // normalized coordinates live on the unit sphere, so their scale is
    // 1/sqrt(dim); the 3-SE band uses that scale.
    let se = (1.0 / dim as f64 / n as f64).sqrt();
    for (j, s) in coord_sums.iter().enumerate() {
        let mean = s / n as f64;
        assert!(
            mean.abs() < 3.0 * se,
            "direction coordinate {j} mean {mean} exceeds 3 se {se}"
        );
    }
}
