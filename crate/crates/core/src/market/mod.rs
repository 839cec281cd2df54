//! Multi-asset Black–Scholes market: exact path simulation, discounting,
//! payoffs, the diffusion coefficient and its inverse, the first-variation
//! process and the Margrabe analytic benchmark.

mod grid;
mod margrabe;
mod model;
mod paths;
mod payoff;

pub use grid::TimeGrid;
pub use margrabe::{exchange_sigma_bar, margrabe_delta, margrabe_price};
pub use model::MarketModel;
pub use paths::{simulate_paths, simulate_variational, InitialSampler, PathBatch, VariationalBatch};
pub use payoff::Payoff;
