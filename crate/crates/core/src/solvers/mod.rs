//! Training algorithms producing control-variate models.
//!
//! Seven solvers share one protocol: fresh simulated batch per optimizer
//! step, Adam with the two-phase learning-rate schedule, and the windowed
//! stopping criterion on the loss history.

mod batch;
mod bel;
mod cv_model;
mod mcv;
mod mrs;
mod projection;

pub use bel::{bel_targets, train_bel};
pub use cv_model::{joint_hidden_layers_for_parity, ControlVariateModel, GradientApprox, TimeNets};
pub use mcv::{train_corr_max, train_var_min};
pub use mrs::{train_mrs_iterative, train_mrs_joint};
pub use projection::{projection_targets, train_projection, train_projection_iterative};

use serde::{Deserialize, Serialize};

use crate::market::InitialSampler;
use crate::nn::LrSchedule;

/// Uniform sampling ranges for parametric training inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricSampling {
    /// Per-asset volatilities drawn i.i.d. from this range.
    pub sigma_range: (f64, f64),
    /// Risk-free rate range; `None` keeps the model rate fixed and feeds
    /// only volatilities to the networks.
    pub rate_range: Option<(f64, f64)>,
}

/// Shared training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epsilon: f64,
    pub window: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub lr: LrSchedule,
    /// Hidden layers of the per-timestep networks.
    pub hidden_layers: usize,
    /// Hidden width; `None` means `d + 20`.
    pub hidden_width: Option<usize>,
    pub batchnorm: bool,
    /// Initialise each timestep from the converged successor (iterative
    /// solvers only).
    pub warm_start: bool,
    pub init: InitialSampler,
    pub parametric: Option<ParametricSampling>,
    /// Hidden-layer count of the joint time-input networks; `None` picks
    /// the depth whose parameter total matches the per-timestep networks.
    pub joint_hidden_layers: Option<usize>,
    /// Estimate the variance-optimal coefficient on a fresh batch after
    /// training instead of keeping λ = 1 (the correlation solver always
    /// estimates it).
    pub estimate_lambda: bool,
}

impl TrainConfig {
    pub fn new(seed: u64, init: InitialSampler) -> Self {
        TrainConfig {
            batch_size: 5000,
            epsilon: 5e-6,
            window: 100,
            max_iterations: 100_000,
            seed,
            lr: LrSchedule::default(),
            hidden_layers: 2,
            hidden_width: None,
            batchnorm: true,
            warm_start: true,
            init,
            parametric: None,
            joint_hidden_layers: None,
            estimate_lambda: false,
        }
    }

    pub fn hidden_width_for(&self, dim: usize) -> usize {
        self.hidden_width.unwrap_or(dim + 20)
    }
}

/// Loss trace and cost counters of one training run.
#[derive(Debug, Clone, Default)]
pub struct LossHistory {
    pub losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub optimizer_steps: usize,
    pub batch_size: usize,
    /// Timestep visit order of the iterative solvers.
    pub timestep_order: Vec<usize>,
    /// Stages that hit `max_iterations` before the stopping criterion.
    pub non_converged: Vec<usize>,
    /// Batches skipped by the correlation solver for lack of variance.
    pub degenerate_batches: usize,
}

impl LossHistory {
    pub fn paths_consumed(&self) -> usize {
        self.optimizer_steps * self.batch_size
    }

    pub fn converged(&self) -> bool {
        self.non_converged.is_empty()
    }

    pub(crate) fn record(&mut self, loss: f64, lr: f64) {
        self.losses.push(loss);
        self.learning_rates.push(lr);
        self.optimizer_steps += 1;
    }
}

/// True when the averages of the last two consecutive windows of the loss
/// history differ by less than `epsilon`.
pub fn stopping_criterion(losses: &[f64], window: usize, epsilon: f64) -> bool {
    assert!(window >= 1, "window must be at least 1");
    let n = losses.len();
    if n < 2 * window {
        return false;
    }
    let recent: f64 = losses[n - window..].iter().sum::<f64>() / window as f64;
    let previous: f64 = losses[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
    (recent - previous).abs() < epsilon
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_history_converges() {
        let losses = vec![0.3; 200];
        assert!(stopping_criterion(&losses, 100, 1e-12));
    }

    #[test]
    fn short_history_does_not() {
        let losses = vec![0.0; 150];
        assert!(!stopping_criterion(&losses, 100, 1.0));
    }

    #[test]
    fn linear_decrease_keeps_training() {
        // Slope 1e-4 per step gives window-mean gap window * 1e-4 = 1e-2.
        let losses: Vec<f64> = (0..200).map(|i| 1.0 - 1e-4 * i as f64).collect();
        assert!(!stopping_criterion(&losses, 100, 5e-6));
        assert!(stopping_criterion(&losses, 100, 1.1e-2));
    }
}
