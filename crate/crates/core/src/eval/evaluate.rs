//! Control-variate estimators and the replicated evaluation loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{variance_chi2_ci, EvaluationReport, SampleMoments};
use crate::market::{simulate_paths, InitialSampler, MarketModel, PathBatch, Payoff};
use crate::math::RandomStream;
use crate::solvers::ControlVariateModel;

/// `σ(t, x) ΔW` as a `d`-vector: component `l` is `x_l Σ_j σ^{lj} ΔW^j`.
fn sigma_dw(model: &MarketModel, state: &[f64], dw: &[f64], out: &mut [f64]) {
    let sig = model.sigma_eff();
    if model.is_diagonal() {
        for l in 0..state.len() {
            out[l] = state[l] * sig[(l, l)] * dw[l];
        }
    } else {
        for l in 0..state.len() {
            out[l] = state[l] * sig.row(l).iter().zip(dw).map(|(s, w)| s * w).sum::<f64>();
        }
    }
}

/// Discretised martingale `M^θ` per path: the left-point Riemann sum
/// `Σ_{k=0}^{Nsteps-1} D(t0, t_k) θ_k(x_k) σ(t_k, x_k) ΔW_{k+1}`.
pub fn martingale_sum(
    cv: &ControlVariateModel,
    paths: &PathBatch,
    model: &MarketModel,
) -> Result<Vec<f64>> {
    if paths.grid != cv.grid {
        return Err(Error::GridMismatch(
            "paths were simulated on a different grid than the model was trained on".into(),
        ));
    }
    let d = model.dim();
    let nsteps = paths.grid.nsteps();
    let mut m = vec![0.0; paths.n_paths];
    let mut w = vec![0.0; d];
    for k in 0..nsteps {
        let states = paths.states_at(k);
        let grad = cv.gradient_at(k, &states, model)?;
        let df = model.discount_factor(paths.grid.start(), paths.grid.time(k));
        for i in 0..paths.n_paths {
            sigma_dw(model, paths.state(i, k), paths.increment(i, k), &mut w);
            let dot: f64 = grad.row(i).iter().zip(&w).map(|(g, wi)| g * wi).sum();
            m[i] += df * dot;
        }
    }
    Ok(m)
}

/// Per-path controlled values `𝒱_i = D(t0, T) g(X_T) - λ M_i` and their
/// accumulated moments.
pub fn cv_estimate(
    cv: &ControlVariateModel,
    paths: &PathBatch,
    payoff: &Payoff,
    model: &MarketModel,
    lambda_override: Option<f64>,
) -> Result<(Vec<f64>, SampleMoments)> {
    let lambda = lambda_override.unwrap_or(cv.lambda);
    let m = martingale_sum(cv, paths, model)?;
    let df = model.discount_factor(paths.grid.start(), paths.grid.horizon());
    let mut values = Vec::with_capacity(paths.n_paths);
    let mut moments = SampleMoments::new();
    for i in 0..paths.n_paths {
        let v = df * payoff.eval(paths.terminal(i)) - lambda * m[i];
        values.push(v);
        moments.push(v);
    }
    Ok((values, moments))
}

/// Variance-optimal coefficient `λ* = Ĉov[ξ, m] / V̂ar[m]` from unbiased
/// sample moments. Returns `(0, true)` on a degenerate (zero-variance)
/// control variate.
pub fn optimal_lambda(xi: &[f64], m: &[f64]) -> (f64, bool) {
    assert_eq!(xi.len(), m.len());
    let n = xi.len() as f64;
    let mean_xi = xi.iter().sum::<f64>() / n;
    let mean_m = m.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_m = 0.0;
    for (x, y) in xi.iter().zip(m) {
        cov += (x - mean_xi) * (y - mean_m);
        var_m += (y - mean_m) * (y - mean_m);
    }
    if var_m == 0.0 {
        return (0.0, true);
    }
    (cov / var_m, false)
}

/// Replicated evaluation: `n_mc` independent replications of `n_in` paths,
/// pooled per-sample variances for the plain and controlled estimators,
/// the reduction factor, and χ² confidence intervals from the replicated
/// estimator means.
pub fn evaluate(
    cv: &ControlVariateModel,
    model: &MarketModel,
    payoff: &Payoff,
    init: &InitialSampler,
    n_mc: usize,
    n_in: usize,
    stream: RandomStream,
) -> Result<EvaluationReport> {
    if n_mc < 2 {
        return Err(Error::Config("need at least two replications".into()));
    }
    payoff.validate(model.dim())?;
    let chunk = 8192.min(n_in.max(1));
    let mut pooled_xi = SampleMoments::new();
    let mut pooled_cv = SampleMoments::new();
    let mut rep_means_xi = Vec::with_capacity(n_mc);
    let mut rep_means_cv = Vec::with_capacity(n_mc);
    let df = model.discount_factor(cv.grid.start(), cv.grid.horizon());
    for rep in 0..n_mc {
        let rep_base = stream.substream((rep * n_in) as u64);
        let mut rep_xi = SampleMoments::new();
        let mut rep_cv = SampleMoments::new();
        let mut done = 0;
        while done < n_in {
            let take = chunk.min(n_in - done);
            let paths = simulate_paths(model, &cv.grid, take, init, rep_base.substream(done as u64))?;
            let m = martingale_sum(cv, &paths, model)?;
            for i in 0..take {
                let xi = df * payoff.eval(paths.terminal(i));
                let v = xi - cv.lambda * m[i];
                rep_xi.push(xi);
                rep_cv.push(v);
            }
            done += take;
        }
        rep_means_xi.push(rep_xi.mean());
        rep_means_cv.push(rep_cv.mean());
        pooled_xi.merge(&rep_xi);
        pooled_cv.merge(&rep_cv);
    }
    let plain_variance = pooled_xi.variance();
    let cv_variance = pooled_cv.variance();
    let mean = pooled_cv.mean();
    let se = pooled_cv.std_error();
    Ok(EvaluationReport {
        plain_variance,
        cv_variance,
        reduction_factor: plain_variance / cv_variance,
        estimator_mean: mean,
        estimator_ci: (mean - 1.96 * se, mean + 1.96 * se),
        variance_ci_mc: variance_chi2_ci(&rep_means_xi, 0.05),
        variance_ci_cv: variance_chi2_ci(&rep_means_cv, 0.05),
        lambda: cv.lambda,
        n_mc,
        n_in,
        seed: stream.seed,
        training_steps: 0,
        training_paths: 0,
        mc_mean: pooled_xi.mean(),
        mc_std_error: pooled_xi.std_error(),
        cv_std_error: se,
    })
}

/// Evaluate one trained model under mis-specified volatilities: each σ
/// builds a fresh market (same correlation and rate) while the networks
/// stay fixed.
pub fn robustness_sweep(
    cv: &ControlVariateModel,
    base_model: &MarketModel,
    payoff: &Payoff,
    init: &InitialSampler,
    sigma_values: &[f64],
    n_mc: usize,
    n_in: usize,
    stream: RandomStream,
) -> Result<Vec<(f64, EvaluationReport)>> {
    sigma_values
        .par_iter()
        .map(|&sigma| {
            let model = base_model.with_sigma(vec![sigma; base_model.dim()])?;
            let report = evaluate(cv, &model, payoff, init, n_mc, n_in, stream)?;
            Ok((sigma, report))
        })
        .collect()
}
