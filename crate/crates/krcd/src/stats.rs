//! Standard-normal tail probabilities for the coordinate-wise z-tests.

/// Standard normal CDF, computed through the complementary error function.
///
/// Absolute error is below 1e-12 over the whole real line, which is far
/// tighter than anything the z-tests need.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided p-value for a standard-normal statistic: 2(1 - Phi(|z|)).
///
/// Equivalent to erfc(|z|/sqrt(2)), which avoids the catastrophic
/// cancellation of `1 - cdf` for large |z|. Clamped to [1e-300, 1].
pub fn two_sided_p(z: f64) -> f64 {
    let p = libm::erfc(z.abs() / std::f64::consts::SQRT_2);
    p.clamp(1e-300, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_at_zero_is_half() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_matches_known_quantiles() {
        // Phi(1.959963985) = 0.975
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        // Phi(-1) = 0.15865525393145707
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_07).abs() < 1e-12);
    }

    #[test]
    fn two_sided_p_at_critical_value() {
        let p = two_sided_p(1.959964);
        assert!((p - 0.05).abs() < 1e-4);
    }

    #[test]
    fn two_sided_p_is_symmetric_and_clamped() {
        assert_eq!(two_sided_p(3.2), two_sided_p(-3.2));
        assert_eq!(two_sided_p(0.0), 1.0);
        assert!(two_sided_p(40.0) >= 1e-300);
    }
}
