//! Closed-form price and delta of the exchange option, used as the analytic
//! benchmark on two assets.

use crate::market::MarketModel;
use crate::math::normal_cdf;

fn d1_d2(s1: f64, s2: f64, maturity: f64, sigma_bar: f64) -> (f64, f64) {
    let vt = sigma_bar * maturity.sqrt();
    let d1 = ((s1 / s2).ln() + 0.5 * vt * vt) / vt;
    (d1, d1 - vt)
}

/// `s1 Φ(d1) - s2 Φ(d2)`: value of the option to exchange asset 2 for
/// asset 1, rate-free.
pub fn margrabe_price(s1: f64, s2: f64, maturity: f64, sigma_bar: f64) -> f64 {
    let (d1, d2) = d1_d2(s1, s2, maturity, sigma_bar);
    s1 * normal_cdf(d1) - s2 * normal_cdf(d2)
}

/// Gradient `(Φ(d1), -Φ(d2))` of the Margrabe price in `(s1, s2)`.
pub fn margrabe_delta(s1: f64, s2: f64, maturity: f64, sigma_bar: f64) -> [f64; 2] {
    let (d1, d2) = d1_d2(s1, s2, maturity, sigma_bar);
    [normal_cdf(d1), -normal_cdf(d2)]
}

/// Effective exchange volatility `√((σ^{11}-σ^{21})² + (σ^{22}-σ^{12})²)`
/// of a two-asset model.
pub fn exchange_sigma_bar(model: &MarketModel) -> f64 {
    assert_eq!(model.dim(), 2, "exchange volatility needs two assets");
    let s = model.sigma_eff();
    let a = s[(0, 0)] - s[(1, 0)];
    let b = s[(1, 1)] - s[(0, 1)];
    (a * a + b * b).sqrt()
}
