//! Martingale control variates for Monte-Carlo option pricing.
//!
//! The library simulates multi-asset Black–Scholes dynamics, trains neural
//! approximations of the pricing function and its gradient with several
//! solvers, and uses the gradient to build unbiased control-variate
//! Monte-Carlo estimators together with the statistics needed to judge the
//! achieved variance reduction.

pub mod error;

pub mod eval;
pub mod market;
pub mod nn;
pub mod solvers;
pub mod math;



pub use error::Error;
