use crate::error::{Error, Result};
use crate::metrics::special::{normal_cdf, normal_log_pdf};
use crate::scalar::{real, Real};
use serde::{Deserialize, Serialize};

fn check_congruent<F>(op: &'static str, a: &[F], b: &[F]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Shape {
            op,
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        });
    }
    Ok(())
}

fn check_finite<F: Real>(op: &'static str, values: &[F]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite input to {op}")));
    }
    Ok(())
}

/// `(mae, rmse)` of the mean predictions.
pub fn point_metrics<F: Real>(y: &[F], mu: &[F]) -> Result<(F, F)> {
    check_congruent("point_metrics", y, mu)?;
    check_finite("point_metrics", y)?;
    check_finite("point_metrics", mu)?;
    let n = real::<F>(y.len() as f64);
    let mae = y
        .iter()
        .zip(mu)
        .map(|(a, b)| (*a - *b).abs())
        .sum::<F>()
        / n;
    let mse = y
        .iter()
        .zip(mu)
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<F>()
        / n;
    Ok((mae, mse.sqrt()))
}

/// Mean Gaussian NLL under the moment-matched predictive `(mu, var)`.
pub fn nll_moment<F: Real>(y: &[F], mu: &[F], var: &[F]) -> Result<F> {
    check_congruent("nll_metric", y, mu)?;
    check_congruent("nll_metric", y, var)?;
    if var.iter().any(|v| *v <= F::zero()) {
        return Err(Error::domain("nll_metric", "non-positive variance"));
    }
    let n = real::<F>(y.len() as f64);
    let total = y
        .iter()
        .zip(mu.iter().zip(var))
        .map(|(yt, (m, v))| -normal_log_pdf(*yt, *m, *v))
        .sum::<F>();
    Ok(total / n)
}

/// Mean NLL of the exact Monte Carlo mixture
/// `-log[(1/N) sum_i N(y; mu_i, var_i)]`, via log-sum-exp.
pub fn nll_mixture<F: Real>(y: &[F], mu_samples: &[Vec<F>], var_samples: &[Vec<F>]) -> Result<F> {
    if mu_samples.is_empty() || mu_samples.len() != var_samples.len() {
        return Err(Error::config("mixture NLL needs N >= 1 congruent sample rows"));
    }
    let t = y.len();
    if t == 0 || mu_samples.iter().any(|row| row.len() != t) {
        return Err(Error::config("sample rows must match the target length"));
    }
    let n_passes = mu_samples.len();
    let log_n = real::<F>((n_passes as f64).ln());
    let mut total = F::zero();
    for (j, yt) in y.iter().enumerate() {
        let logs: Vec<F> = (0..n_passes)
            .map(|i| normal_log_pdf(*yt, mu_samples[i][j], var_samples[i][j]))
            .collect();
        let max = logs.iter().copied().fold(F::neg_infinity(), F::max);
        let sum_exp = logs.iter().map(|l| (*l - max).exp()).sum::<F>();
        total = total - (max + sum_exp.ln() - log_n);
    }
    Ok(total / real::<F>(t as f64))
}

/// Predictive CDF value `F(y)` under `N(mu, var)`; the denominator uses the
/// standard deviation.
pub fn gaussian_cdf<F: Real>(y: F, mu: F, var: F) -> Result<F> {
    if var <= F::zero() {
        return Err(Error::domain("gaussian_cdf", "non-positive variance"));
    }
    Ok(normal_cdf(y, mu, var.sqrt()))
}

/// Calibration curve on `m` equally spaced confidence levels including both
/// endpoints: `p_j = j/(m-1)`, `p̂_j = #{F_t <= p_j} / T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub levels: Vec<f64>,
    pub empirical: Vec<f64>,
}

pub fn calibration_curve<F: Real>(pit: &[F], m: usize) -> Result<CalibrationCurve> {
    if pit.is_empty() {
        return Err(Error::config("calibration curve needs at least one PIT value"));
    }
    if m < 2 {
        return Err(Error::config("calibration curve needs m >= 2 levels"));
    }
    let mut sorted: Vec<f64> = pit.iter().map(|v| v.as_f64()).collect();
    if sorted.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::domain("calibration_curve", "PIT values outside [0, 1]"));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t = sorted.len() as f64;
    let mut levels = Vec::with_capacity(m);
    let mut empirical = Vec::with_capacity(m);
    for j in 0..m {
        let p = j as f64 / (m - 1) as f64;
        let count = sorted.partition_point(|v| *v <= p);
        levels.push(p);
        empirical.push(count as f64 / t);
    }
    Ok(CalibrationCurve { levels, empirical })
}

/// Root mean square calibration error over the level grid.
pub fn rmsce(curve: &CalibrationCurve) -> f64 {
    let m = curve.levels.len() as f64;
    let ss: f64 = curve
        .levels
        .iter()
        .zip(&curve.empirical)
        .map(|(p, e)| (p - e) * (p - e))
        .sum();
    (ss / m).sqrt()
}

/// Trapezoidal integral of `|p̂(p) - p|` over the level grid.
pub fn miscalibration_area(curve: &CalibrationCurve) -> f64 {
    let mut area = 0.0;
    for w in 0..curve.levels.len() - 1 {
        let dx = curve.levels[w + 1] - curve.levels[w];
        let f0 = (curve.empirical[w] - curve.levels[w]).abs();
        let f1 = (curve.empirical[w + 1] - curve.levels[w + 1]).abs();
        area += 0.5 * (f0 + f1) * dx;
    }
    area
}

/// `sqrt(mean predicted variance)` — same units as the predictions.
pub fn sharpness<F: Real>(var: &[F]) -> Result<F> {
    if var.is_empty() {
        return Err(Error::config("sharpness needs at least one variance"));
    }
    if var.iter().any(|v| *v <= F::zero()) {
        return Err(Error::domain("sharpness", "non-positive variance"));
    }
    let mean = var.iter().copied().sum::<F>() / real::<F>(var.len() as f64);
    Ok(mean.sqrt())
}

/// Differential entropy of `N(·, var)`: `0.5 ln(2π e var)`.
pub fn entropy<F: Real>(var: F) -> Result<F> {
    if var <= F::zero() {
        return Err(Error::domain("entropy", "non-positive variance"));
    }
    let tau = real::<F>(2.0 * std::f64::consts::PI * std::f64::consts::E);
    Ok(real::<F>(0.5) * (tau * var).ln())
}

pub fn mean_entropy<F: Real>(var: &[F]) -> Result<F> {
    if var.is_empty() {
        return Err(Error::config("mean entropy needs at least one variance"));
    }
    let mut total = F::zero();
    for v in var {
        total = total + entropy(*v)?;
    }
    Ok(total / real::<F>(var.len() as f64))
}

/// One point of the accuracy-versus-confidence view: RMSE over the subset
/// whose total variance falls below an ascending quantile threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub retained_fraction: f64,
    /// None records a gap (empty retained subset at this level).
    pub rmse: Option<f64>,
}

pub fn rmse_vs_confidence<F: Real>(
    y: &[F],
    mu: &[F],
    var_total: &[F],
    levels: usize,
) -> Result<Vec<ConfidencePoint>> {
    check_congruent("rmse_vs_confidence", y, mu)?;
    check_congruent("rmse_vs_confidence", y, var_total)?;
    if levels < 2 {
        return Err(Error::config("rmse_vs_confidence needs levels >= 2"));
    }
    let t = y.len();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| var_total[a].partial_cmp(&var_total[b]).unwrap());
    let mut out = Vec::with_capacity(levels);
    for j in 1..=levels {
        let take = ((j as f64 / levels as f64) * t as f64).ceil() as usize;
        let take = take.clamp(0, t);
        if take == 0 {
            out.push(ConfidencePoint {
                retained_fraction: 0.0,
                rmse: None,
            });
            continue;
        }
        let mse = order[..take]
            .iter()
            .map(|&i| {
                let d = (y[i] - mu[i]).as_f64();
                d * d
            })
            .sum::<f64>()
            / take as f64;
        out.push(ConfidencePoint {
            retained_fraction: take as f64 / t as f64,
            rmse: Some(mse.sqrt()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, stream};
    use rand::Rng;

    #[test]
    fn point_metric_trivials() {
        let (mae, rmse) = point_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((mae, rmse), (0.0, 0.0));
        let (mae, rmse) = point_metrics(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((mae, rmse), (1.0, 1.0));
        let (mae, rmse) = point_metrics(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(mae, 1.0);
        assert!((rmse - 2.0f64.sqrt()).abs() < 1e-15);
        assert!(point_metrics::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn nll_moment_landmarks() {
        let inv_two_pi = 1.0 / (2.0 * std::f64::consts::PI);
        let v: f64 = nll_moment(&[3.0], &[3.0], &[inv_two_pi]).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(nll_moment::<f64>(&[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn mixture_equals_moment_at_single_pass_and_matches_brute_force() {
        let y = vec![2.0, -0.5, 1.0];
        let mu = vec![vec![1.5, 0.0, 1.2]];
        let var = vec![vec![0.8, 1.1, 0.5]];
        let mixture: f64 = nll_mixture(&y, &mu, &var).unwrap();
        let moment: f64 = nll_moment(&y, &mu[0], &var[0]).unwrap();
        assert!((mixture - moment).abs() < 1e-13);

        // Brute-force density summation oracle on a two-component set.
        let y = vec![2.0];
        let mu = vec![vec![1.0], vec![3.0]];
        let var = vec![vec![1.0], vec![1.0]];
        let mixture = nll_mixture(&y, &mu, &var).unwrap();
        let density = 0.5
            * ((-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt()
                + (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt());
        assert!((mixture + density.ln()).abs() < 1e-10);
    }

    #[test]
    fn mixture_matches_brute_force_on_random_sets() {
        let mut rng = stream(3, 700);
        for _ in 0..20 {
            let t = 4;
            let n = 5;
            let y: Vec<f64> = normal_vec(&mut rng, t);
            let mu: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut rng, t)).collect();
            let var: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    normal_vec::<f64, _>(&mut rng, t)
                        .iter()
                        .map(|v| 0.2 + v.abs())
                        .collect()
                })
                .collect();
            let fast = nll_mixture(&y, &mu, &var).unwrap();
            // Direct density summation, no log-sum-exp.
            let mut total = 0.0;
            for (j, yt) in y.iter().enumerate() {
                let mut density = 0.0;
                for i in 0..n {
                    let d = yt - mu[i][j];
                    density += (-d * d / (2.0 * var[i][j])).exp()
                        / (2.0 * std::f64::consts::PI * var[i][j]).sqrt();
                }
                total -= (density / n as f64).ln();
            }
            let brute = total / t as f64;
            assert!((fast - brute).abs() < 1e-10, "{fast} vs {brute}");
        }
    }

    #[test]
    fn cdf_landmarks() {
        let f: f64 = gaussian_cdf(1.0, 1.0, 4.0).unwrap();
        assert!((f - 0.5).abs() < 2e-7);
        let f: f64 = gaussian_cdf(3.0, 1.0, 4.0).unwrap(); // +1 sigma
        assert!((f - 0.8413447).abs() < 1e-6);
        let f: f64 = gaussian_cdf(-3.0, 1.0, 4.0).unwrap(); // -2 sigma
        assert!((f - 0.0227501).abs() < 1e-6);
    }

    #[test]
    fn calibration_curve_counts() {
        let curve = calibration_curve(&[0.1, 0.4, 0.6, 0.9], 3).unwrap();
        assert_eq!(curve.levels, vec![0.0, 0.5, 1.0]);
        assert_eq!(curve.empirical, vec![0.0, 0.5, 1.0]);

        // All PIT at zero: every level counts everything.
        let curve = calibration_curve(&[0.0; 5], 3).unwrap();
        assert_eq!(curve.empirical, vec![1.0, 1.0, 1.0]);

        // Uniform grid: p̂ tracks p to within 1/T.
        let t = 10_000;
        let pit: Vec<f64> = (0..t).map(|i| (i as f64 + 0.5) / t as f64).collect();
        let curve = calibration_curve(&pit, 101).unwrap();
        for (p, e) in curve.levels.iter().zip(&curve.empirical) {
            assert!((p - e).abs() <= 1.0 / t as f64 + 1e-12);
        }
        // Monotone non-decreasing; endpoint pinned at 1.
        for w in curve.empirical.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(*curve.empirical.last().unwrap(), 1.0);
    }

    #[test]
    fn rmsce_hand_values() {
        let perfect = CalibrationCurve {
            levels: vec![0.0, 0.5, 1.0],
            empirical: vec![0.0, 0.5, 1.0],
        };
        assert_eq!(rmsce(&perfect), 0.0);

        let all_zero = calibration_curve(&[0.0; 7], 3).unwrap();
        let expected = (1.25f64 / 3.0).sqrt(); // ≈ 0.6455
        assert!((rmsce(&all_zero) - expected).abs() < 1e-12);

        // Anti-calibrated p̂ = 1 - p tends to sqrt(1/3) for dense grids.
        let m = 1001;
        let levels: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let empirical: Vec<f64> = levels.iter().map(|p| 1.0 - p).collect();
        let anti = CalibrationCurve { levels, empirical };
        assert!((rmsce(&anti) - (1.0f64 / 3.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn rmsce_is_invariant_to_row_order() {
        let mut rng = stream(5, 701);
        let pit: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let mut reversed = pit.clone();
        reversed.reverse();
        let a = rmsce(&calibration_curve(&pit, 101).unwrap());
        let b = rmsce(&calibration_curve(&reversed, 101).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn miscalibration_area_hand_values() {
        let perfect = CalibrationCurve {
            levels: vec![0.0, 0.5, 1.0],
            empirical: vec![0.0, 0.5, 1.0],
        };
        assert_eq!(miscalibration_area(&perfect), 0.0);
        // All F = 0: |1 - p| integrates to 1/2.
        let all_zero = calibration_curve(&[0.0; 4], 101).unwrap();
        assert!((miscalibration_area(&all_zero) - 0.5).abs() < 1e-12);
        // Anti-calibrated: |1 - 2p| integrates to 1/2.
        let m = 1001;
        let levels: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let empirical: Vec<f64> = levels.iter().map(|p| 1.0 - p).collect();
        let anti = CalibrationCurve { levels, empirical };
        assert!((miscalibration_area(&anti) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sharpness_and_entropy_identities() {
        assert!((sharpness::<f64>(&[4.0, 4.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((sharpness::<f64>(&[1.0, 3.0]).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
        // Homogeneity: scaling variances by k² scales sharpness by k.
        let s1: f64 = sharpness(&[0.5, 2.0, 1.5]).unwrap();
        let s2: f64 = sharpness(&[0.5 * 9.0, 2.0 * 9.0, 1.5 * 9.0]).unwrap();
        assert!((s2 / s1 - 3.0).abs() < 1e-12);

        let e0: f64 = entropy(1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E)).unwrap();
        assert!(e0.abs() < 1e-12);
        let e1 = entropy(1.0f64).unwrap();
        let e4 = entropy(4.0f64).unwrap();
        assert!((e4 - e1 - 2.0f64.ln()).abs() < 1e-12);
        // Monotone in the variance.
        let mut last = f64::NEG_INFINITY;
        for v in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let e: f64 = entropy(v).unwrap();
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn confidence_curve_shapes() {
        let mut rng = stream(7, 702);
        let t = 2000;
        // Homoscedastic: flat curve.
        let y: Vec<f64> = normal_vec(&mut rng, t);
        let mu = vec![0.0; t];
        let var = vec![1.0; t];
        let curve = rmse_vs_confidence(&y, &mu, &var, 10).unwrap();
        let rmses: Vec<f64> = curve.iter().map(|p| p.rmse.unwrap()).collect();
        let overall = rmses[9];
        for r in &rmses {
            assert!((r - overall).abs() / overall < 0.15, "{r} vs {overall}");
        }
        assert_eq!(curve[9].retained_fraction, 1.0);

        // Error magnitude proportional to sigma: strictly decreasing.
        let sigmas: Vec<f64> = (0..t).map(|i| 0.1 + i as f64 / t as f64).collect();
        let y: Vec<f64> = sigmas
            .iter()
            .map(|s| s * f64::standard_normal(&mut rng))
            .collect();
        let mu = vec![0.0; t];
        let var: Vec<f64> = sigmas.iter().map(|s| s * s).collect();
        let curve = rmse_vs_confidence(&y, &mu, &var, 10).unwrap();
        let rmses: Vec<f64> = curve.iter().map(|p| p.rmse.unwrap()).collect();
        for w in rmses.windows(2) {
            assert!(w[1] > w[0], "expected increasing with retained fraction: {rmses:?}");
        }
    }
}
