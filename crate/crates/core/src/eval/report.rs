//! Evaluation results and their serialized forms.

use serde::{Deserialize, Serialize};

/// Variance-reduction evaluation of one control-variate model.
///
/// Serialized field names are part of the output contract; the plain
/// Monte-Carlo estimator statistics used internally by tests are skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Pooled per-sample variance of the plain Monte-Carlo estimator.
    pub plain_variance: f64,
    /// Pooled per-sample variance of the controlled estimator.
    pub cv_variance: f64,
    pub reduction_factor: f64,
    /// Pooled mean of the controlled estimator.
    pub estimator_mean: f64,
    /// 95% central-limit interval around `estimator_mean`.
    pub estimator_ci: (f64, f64),
    /// 95% χ² interval for the variance of the replicated plain estimator.
    pub variance_ci_mc: (f64, f64),
    /// 95% χ² interval for the variance of the replicated CV estimator.
    pub variance_ci_cv: (f64, f64),
    pub lambda: f64,
    pub n_mc: usize,
    pub n_in: usize,
    pub seed: u64,
    pub training_steps: usize,
    pub training_paths: usize,
    #[serde(skip)]
    pub mc_mean: f64,
    #[serde(skip)]
    pub mc_std_error: f64,
    #[serde(skip)]
    pub cv_std_error: f64,
}

impl EvaluationReport {
    pub fn csv_header() -> &'static str {
        "plain_variance,cv_variance,reduction_factor,estimator_mean,estimator_ci_low,\
         estimator_ci_high,variance_ci_mc_low,variance_ci_mc_high,variance_ci_cv_low,\
         variance_ci_cv_high,lambda,n_mc,n_in,seed,training_steps,training_paths"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.plain_variance,
            self.cv_variance,
            self.reduction_factor,
            self.estimator_mean,
            self.estimator_ci.0,
            self.estimator_ci.1,
            self.variance_ci_mc.0,
            self.variance_ci_mc.1,
            self.variance_ci_cv.0,
            self.variance_ci_cv.1,
            self.lambda,
            self.n_mc,
            self.n_in,
            self.seed,
            self.training_steps,
            self.training_paths,
        )
    }

    /// Stamp the training cost counters.
    pub fn with_training_cost(mut self, steps: usize, paths: usize) -> Self {
        self.training_steps = steps;
        self.training_paths = paths;
        self
    }
}
