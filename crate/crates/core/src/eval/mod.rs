//! Control-variate Monte-Carlo estimation and the evaluation framework:
//! replicated estimators, pooled empirical variances, variance-reduction
//! factors and χ² confidence intervals.

mod chi2;
mod evaluate;
mod moments;
mod report;

pub use chi2::variance_chi2_ci;
pub use evaluate::{cv_estimate, evaluate, martingale_sum, optimal_lambda, robustness_sweep};
pub use moments::SampleMoments;
pub use report::EvaluationReport;
