//! Standard normal distribution function and density.

use statrs::function::erf::erfc;

/// Distribution function Φ of the standard normal, via the complementary
/// error function: Φ(x) = erfc(-x/√2) / 2.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_at_zero() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_symmetry() {
        for x in [-3.5, -1.0, -0.2, 0.4, 1.7, 2.9] {
            assert!((normal_cdf(x) - (1.0 - normal_cdf(-x))).abs() < 1e-14, "x={x}");
        }
    }

    /// Simpson quadrature of the density, independent of the erfc route.
    fn cdf_by_quadrature(x: f64) -> f64 {
        let lo = -10.0;
        let n = 20_000; // even
        let h = (x - lo) / n as f64;
        let mut acc = normal_pdf(lo) + normal_pdf(x);
        for i in 1..n {
            let xi = lo + i as f64 * h;
            acc += normal_pdf(xi) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn cdf_matches_quadrature() {
        // 1.959964 is the 97.5% quantile.
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        for x in [-2.0, -0.5, 0.3, 1.0, 1.959964, 3.0] {
            let q = cdf_by_quadrature(x);
            assert!((normal_cdf(x) - q).abs() < 1e-9, "x={x} cdf={} quad={q}", normal_cdf(x));
        }
    }
}
