use crate::scalar::{real, Real};

/// Error function via the Abramowitz & Stegun 7.1.26 rational
/// approximation; max absolute error ~1.5e-7, ample for calibration
/// counting and CDF reporting.
pub fn erf<F: Real>(x: F) -> F {
    let sign = if x < F::zero() { -F::one() } else { F::one() };
    let x = x.abs();
    let t = F::one() / (F::one() + real::<F>(0.3275911) * x);
    let poly = ((((real::<F>(1.061405429) * t - real::<F>(1.453152027)) * t
        + real::<F>(1.421413741))
        * t
        - real::<F>(0.284496736))
        * t
        + real::<F>(0.254829592))
        * t;
    sign * (F::one() - poly * (-x * x).exp())
}

/// Standard normal CDF at `(y - mu) / sigma`.
pub fn normal_cdf<F: Real>(y: F, mu: F, sigma: F) -> F {
    let half = real::<F>(0.5);
    let z = (y - mu) / (sigma * real::<F>(std::f64::consts::SQRT_2));
    half * (F::one() + erf(z))
}

/// Log density of N(mu, sigma²) at y.
pub fn normal_log_pdf<F: Real>(y: F, mu: F, var: F) -> F {
    let half = real::<F>(0.5);
    let two_pi = real::<F>(2.0 * std::f64::consts::PI);
    let d = y - mu;
    -half * (two_pi * var).ln() - d * d / (real::<F>(2.0) * var)
}
