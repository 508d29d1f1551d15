//! Standard normal distribution helpers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, evaluated through `erfc` so both tails keep relative accuracy.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail probability `Q(x) = 1 - Φ(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Density of `N(mu, sigma^2)` at `x`.
pub fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    norm_pdf((x - mu) / sigma) / sigma
}

/// Probability that `N(mu, sigma^2)` falls in `[lo, hi)`.
pub fn gaussian_interval(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    // Subtract in whichever tail is smaller to avoid cancellation.
    if a > 0.0 {
        (q_function(a) - q_function(b)).max(0.0)
    } else {
        (norm_cdf(b) - norm_cdf(a)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_table_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((q_function(2.0) - 0.022_750_131_948_179_2).abs() < 1e-14);
        // deep tail keeps relative accuracy
        let q8 = q_function(8.0);
        assert!((q8 / 6.220_960_574_271_78e-16 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interval_matches_difference() {
        let p = gaussian_interval(0.0, 1.0, 0.0, 1.0);
        assert!((p - 0.341_344_746_068_542_9).abs() < 1e-14);
        assert_eq!(gaussian_interval(1.0, 0.0, 0.0, 1.0), 0.0);
    }
}
