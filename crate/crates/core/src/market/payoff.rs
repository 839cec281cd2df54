//! Terminal payoffs used in the experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff over the terminal asset vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `max(0, S¹ - S²)`, two assets.
    Exchange,
    /// `max(0, Σ_i S^i - K)`.
    Basket { strike: f64 },
    /// `max(0, S¹ - mean(S², ..., S^d))`.
    ExchangeVsAverage,
}

impl Payoff {
    /// Validate the payoff against the asset count.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Payoff::Exchange if dim != 2 => Err(Error::Config(format!(
                "exchange payoff needs exactly 2 assets, got {dim}"
            ))),
            Payoff::ExchangeVsAverage if dim < 2 => Err(Error::Config(format!(
                "exchange-vs-average payoff needs at least 2 assets, got {dim}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, terminal: &[f64]) -> f64 {
        match self {
            Payoff::Exchange => (terminal[0] - terminal[1]).max(0.0),
            Payoff::Basket { strike } => {
                (terminal.iter().sum::<f64>() - strike).max(0.0)
            }
            Payoff::ExchangeVsAverage => {
                let d = terminal.len();
                let avg = terminal[1..].iter().sum::<f64>() / (d - 1) as f64;
                (terminal[0] - avg).max(0.0)
            }
        }
    }
}
