use std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Probability that a `N(0, sigma^2)` variable falls in `[lo, hi]`.
pub fn normal_interval_mass(lo: f64, hi: f64, sigma: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    // Use the upper tail when both ends are positive to keep precision.
    if lo > 0.0 {
        normal_cdf(-lo / sigma) - normal_cdf(-hi / sigma)
    } else {
        normal_cdf(hi / sigma) - normal_cdf(lo / sigma)
    }
}
