use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF `Φ(x)`, via the complementary error function so the
/// lower tail keeps full relative precision.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `log Φ(x)` without underflow in the far lower tail.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x > 8.0 {
        // Φ(x) = 1 - Φ(-x), Φ(-x) < 7e-16
        (-std_normal_cdf(-x)).ln_1p()
    } else if x > -30.0 {
        std_normal_cdf(x).ln()
    } else {
        // Mills-ratio asymptotic series
        let z2 = 1.0 / (x * x);
        let series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2 + 105.0 * z2.powi(4);
        -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Standard logistic CDF `(1 + e^{-x})^{-1}`.
pub fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard Gumbel density `exp(-x - e^{-x})`.
pub fn gumbel_pdf(x: f64) -> f64 {
    (-x - (-x).exp()).exp()
}

/// Standard Gumbel CDF `exp(-e^{-x})`.
pub fn gumbel_cdf(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series of erf, fine for |x| ≲ 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            let nf = n as f64;
            term *= -x * x / nf;
            sum += term / (2.0 * nf + 1.0);
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        for x in [-2.5, -1.0, -0.1, 0.3, 1.2, 2.9] {
            let oracle = 0.5 * (1.0 + erf_series(x * FRAC_1_SQRT_2));
            assert!((std_normal_cdf(x) - oracle).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn normal_cdf_symmetry() {
        for x in [0.0, 0.3, 1.7, 4.0] {
            assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log_cdf_is_continuous_across_branches() {
        for &x in &[-30.0, 8.0] {
            let lo = log_std_normal_cdf(x - 1e-9);
            let hi = log_std_normal_cdf(x + 1e-9);
            assert!((lo - hi).abs() < 1e-6 * lo.abs() + 1e-15, "x={x}");
        }
        assert!(log_std_normal_cdf(-40.0).is_finite());
        assert!(log_std_normal_cdf(-1e4).is_finite());
        assert!((log_std_normal_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_std_normal_cdf(40.0) <= 0.0);
    }

    #[test]
    fn log_cdf_matches_direct_where_representable() {
        for x in [-29.0, -20.0, -10.0, -3.0, 2.0, 9.0] {
            let direct = std_normal_cdf(x).ln();
            assert!((log_std_normal_cdf(x) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn logistic_and_gumbel_reference_points() {
        assert_eq!(logistic_cdf(0.0), 0.5);
        let e_inv = (-1.0f64).exp();
        assert!((gumbel_cdf(0.0) - e_inv).abs() < 1e-15);
        assert!((gumbel_pdf(0.0) - e_inv).abs() < 1e-15);
        assert!((logistic_cdf(-800.0)).abs() < 1e-300);
        assert_eq!(logistic_cdf(800.0), 1.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn cdfs_are_monotone() {
        let grid: Vec<f64> = (0..4001).map(|i| -20.0 + i as f64 * 0.01).collect();
        for f in [std_normal_cdf, logistic_cdf, gumbel_cdf] {
            assert!(grid.windows(2).all(|w| f(w[0]) <= f(w[1])));
        }
    }
}
