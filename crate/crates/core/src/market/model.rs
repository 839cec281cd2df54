//! Black–Scholes model on `d` correlated assets.

use crate::error::{Error, Result};
use crate::math::{cholesky, LowerTriangularFactor, Matrix};

/// Risk-neutral Black–Scholes dynamics
/// `dS^i = r S^i dt + σ^i S^i Σ_j C^{ij} dW^j`
/// with `C` the lower-triangular factor of the correlation matrix.
#[derive(Debug, Clone)]
pub struct MarketModel {
    dim: usize,
    rate: f64,
    sigma: Vec<f64>,
    chol: LowerTriangularFactor,
    /// Effective volatility matrix `σ^{ij} = σ^i C^{ij}`.
    sigma_eff: Matrix,
    /// Per-asset drift corrections `½ Σ_j (σ^{ij})²`.
    half_var: Vec<f64>,
    /// Inverse of `C`, used by the diffusion inverse.
    chol_inv: Matrix,
    diagonal: bool,
}

impl MarketModel {
    pub fn new(rate: f64, sigma: Vec<f64>, correlation: &Matrix) -> Result<Self> {
        let dim = sigma.len();
        if dim == 0 {
            return Err(Error::Config("need at least one asset".into()));
        }
        if correlation.rows() != dim {
            return Err(Error::Dimension {
                what: "correlation matrix",
                expected: dim,
                actual: correlation.rows(),
            });
        }
        for (i, s) in sigma.iter().enumerate() {
            if !(*s > 0.0) {
                return Err(Error::Config(format!("sigma[{i}] must be positive, got {s}")));
            }
        }
        let chol = cholesky(correlation)?;
        let mut sigma_eff = Matrix::zeros(dim, dim);
        let mut half_var = vec![0.0; dim];
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..dim {
                let v = sigma[i] * chol.entry(i, j);
                sigma_eff[(i, j)] = v;
                acc += v * v;
            }
            half_var[i] = 0.5 * acc;
        }
        let chol_inv = chol.inverse();
        let diagonal = chol.is_diagonal();
        Ok(MarketModel { dim, rate, sigma, chol, sigma_eff, half_var, chol_inv, diagonal })
    }

    /// Model with identity correlation.
    pub fn uncorrelated(rate: f64, sigma: Vec<f64>) -> Result<Self> {
        let d = sigma.len();
        MarketModel::new(rate, sigma, &Matrix::identity(d))
    }

    /// Same correlation and rate, new per-asset volatilities.
    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        MarketModel::new(self.rate, sigma, &self.chol.reconstruct())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn chol(&self) -> &LowerTriangularFactor {
        &self.chol
    }

    /// Effective volatility matrix `σ^{ij} = σ^i C^{ij}`.
    pub fn sigma_eff(&self) -> &Matrix {
        &self.sigma_eff
    }

    pub(crate) fn half_var(&self) -> &[f64] {
        &self.half_var
    }

    /// True when the effective volatility matrix is diagonal, which lets
    /// the simulation skip the dense correlation product.
    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// Deterministic discount factor `e^{-r (t_to - t_from)}`.
    pub fn discount_factor(&self, t_from: f64, t_to: f64) -> f64 {
        debug_assert!(t_from <= t_to);
        (-self.rate * (t_to - t_from)).exp()
    }

    /// Diffusion coefficient `σ(t, x)^{ij} = x^i σ^{ij}`.
    pub fn diffusion(&self, state: &[f64]) -> Result<Matrix> {
        self.check_state(state)?;
        let mut out = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = state[i] * self.sigma_eff[(i, j)];
            }
        }
        Ok(out)
    }

    /// Inverse diffusion `C⁻¹ · diag(1/(x^i σ^i))`.
    pub fn diffusion_inverse(&self, state: &[f64]) -> Result<Matrix> {
        self.check_state(state)?;
        let mut out = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = self.chol_inv[(i, j)] / (state[j] * self.sigma[j]);
            }
        }
        Ok(out)
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::Dimension {
                what: "state vector",
                expected: self.dim,
                actual: state.len(),
            });
        }
        for (i, x) in state.iter().enumerate() {
            if !(*x > 0.0) {
                return Err(Error::Domain(format!("state[{i}] must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_diffusion_and_inverse() {
        let m = MarketModel::uncorrelated(0.05, vec![0.3]).unwrap();
        let d = m.diffusion(&[2.0]).unwrap();
        assert!((d[(0, 0)] - 0.6).abs() < 1e-15);
        let inv = m.diffusion_inverse(&[2.0]).unwrap();
        assert!((inv[(0, 0)] - 1.0 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn diffusion_inverse_round_trip() {
        let corr = Matrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]);
        let m = MarketModel::new(0.01, vec![0.2, 0.5], &corr).unwrap();
        for state in [[1.0, 1.0], [0.3, 2.4], [5.0, 0.01]] {
            let d = m.diffusion(&state).unwrap();
            let inv = m.diffusion_inverse(&state).unwrap();
            let prod = inv.matmul(&d);
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[(i, j)] - want).abs() < 1e-10, "state {state:?} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn diagonal_correlation_gives_diagonal_diffusion() {
        let m = MarketModel::uncorrelated(0.0, vec![0.2, 0.4]).unwrap();
        assert!(m.is_diagonal());
        let d = m.diffusion(&[1.5, 2.0]).unwrap();
        assert_eq!(d[(0, 1)], 0.0);
        assert_eq!(d[(1, 0)], 0.0);
        assert!((d[(0, 0)] - 0.3).abs() < 1e-15);
        assert!((d[(1, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_state() {
        let m = MarketModel::uncorrelated(0.0, vec![0.2]).unwrap();
        assert!(m.diffusion(&[0.0]).is_err());
        assert!(m.diffusion(&[-1.0]).is_err());
        assert!(m.diffusion(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn discount_factor_values() {
        let m = MarketModel::uncorrelated(0.05, vec![0.3]).unwrap();
        assert_eq!(m.discount_factor(0.0, 0.0), 1.0);
        assert!((m.discount_factor(0.0, 0.5) - (-0.025_f64).exp()).abs() < 1e-15);
        // multiplicativity
        let (a, b, c) = (0.1, 0.3, 0.9);
        let lhs = m.discount_factor(a, b) * m.discount_factor(b, c);
        assert!((lhs - m.discount_factor(a, c)).abs() < 1e-15);
    }
}
