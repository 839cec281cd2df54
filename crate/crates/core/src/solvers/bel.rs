//! Projection solver with Bismut–Elworthy–Li regression targets for the
//! gradient: no differentiability of the payoff is needed, the gradient is
//! fit directly by least squares against pathwise functionals of the
//! first-variation process.

use crate::error::{Error, Result};
use crate::market::{simulate_variational, MarketModel, PathBatch, Payoff, TimeGrid};
use crate::math::Matrix;
use crate::nn::{adam_step, AdamState, Network};
use crate::solvers::batch::Trainer;
use crate::solvers::{
    stopping_criterion, ControlVariateModel, GradientApprox, LossHistory, TimeNets, TrainConfig,
};

/// Regression targets
/// `𝒳_k = (D(t0,T) g(X_T) - g(X_{t_k})) · (1/(T-t0)) Σ_{n≥k} (σ(x_{t_n})⁻¹ y_{t_n})ᵀ Δw_{t_{n+1}}`,
/// one `d`-vector per path and timestep, flattened to `n × (Nsteps · d)`.
///
/// The transpose pairs column `j` of `σ⁻¹ Y` with the increments, so the
/// conditional mean of the `k = 0` target is exactly the gradient of the
/// value function (for diagonal diffusion the transpose is immaterial).
pub fn bel_targets(paths: &PathBatch, payoff: &Payoff, model: &MarketModel) -> Result<Matrix> {
    bel_targets_with(paths, |x| payoff.eval(x), model)
}

/// Same targets for an arbitrary terminal functional.
pub fn bel_targets_with(
    paths: &PathBatch,
    payoff: impl Fn(&[f64]) -> f64,
    model: &MarketModel,
) -> Result<Matrix> {
    let d = model.dim();
    let nsteps = paths.grid.nsteps();
    let horizon = paths.grid.horizon();
    let t0 = paths.grid.start();
    let weight = 1.0 / (horizon - t0);
    let variational = simulate_variational(model, paths)?;
    let mut out = Matrix::zeros(paths.n_paths, nsteps * d);
    let mut sig_inv_y = vec![0.0; d * d];
    let mut suffix = vec![0.0; d];
    let mut term = vec![0.0; d];
    for i in 0..paths.n_paths {
        let discounted = model.discount_factor(t0, horizon) * payoff(paths.terminal(i));
        suffix.fill(0.0);
        for k in (0..nsteps).rev() {
            let state = paths.state(i, k);
            let sig_inv = model
                .diffusion_inverse(state)
                .map_err(|_| Error::SingularDiffusion { path: i, step: k })?;
            // sig_inv_y = σ⁻¹(x_k) · Y_k
            let y = variational.matrix(i, k);
            for r in 0..d {
                for c in 0..d {
                    let mut acc = 0.0;
                    for l in 0..d {
                        acc += sig_inv[(r, l)] * y[l * d + c];
                    }
                    sig_inv_y[r * d + c] = acc;
                }
            }
            // term_j = ⟨column j of σ⁻¹Y, Δw⟩
            let dw = paths.increment(i, k);
            for c in 0..d {
                let mut acc = 0.0;
                for r in 0..d {
                    acc += sig_inv_y[r * d + c] * dw[r];
                }
                term[c] = acc;
            }
            for c in 0..d {
                suffix[c] += term[c];
            }
            let scale = (discounted - payoff(state)) * weight;
            for c in 0..d {
                out[(i, k * d + c)] = scale * suffix[c];
            }
        }
    }
    Ok(out)
}

/// Bismut–Elworthy–Li solver: gradient networks per timestep fit by least
/// squares against [`bel_targets`] on fresh batches.
pub fn train_bel(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
    if config.parametric.is_some() {
        return Err(Error::Config(
            "parametric inputs are not supported by the gradient-projection solver".into(),
        ));
    }
    let d = market.dim();
    let nsteps = grid.nsteps();
    let sizes = trainer.per_step_sizes(d);
    let mut nets: Vec<Network> = (0..nsteps)
        .map(|k| trainer.new_network(&sizes, config.batchnorm, k as u64))
        .collect::<Result<_>>()?;
    let mut adams: Vec<AdamState> = nets.iter().map(AdamState::new).collect();

    let mut history = LossHistory { batch_size: config.batch_size, ..Default::default() };
    loop {
        if stopping_criterion(&history.losses, config.window, config.epsilon) {
            break;
        }
        if history.optimizer_steps >= config.max_iterations {
            history.non_converged.push(0);
            break;
        }
        let batch = trainer.fresh_batch(trainer.global_step)?;
        let targets = bel_targets(&batch.paths, payoff, market)?;
        let lr = trainer.lr();
        let n = batch.n();
        let mut loss = 0.0;
        for k in 0..nsteps {
            let input = batch.net_input(k, None);
            let (out, cache) = nets[k].forward_train(&input)?;
            let mut up = Matrix::zeros(n, d);
            let mut l = 0.0;
            for i in 0..n {
                for c in 0..d {
                    let diff = out[(i, c)] - targets[(i, k * d + c)];
                    l += diff * diff;
                    up[(i, c)] = 2.0 * diff / n as f64;
                }
            }
            loss += l / n as f64;
            let grads = nets[k].backward(&cache, &up)?;
            adam_step(&mut nets[k], &grads.params, &mut adams[k], lr)?;
        }
        if !loss.is_finite() {
            return Err(Error::NumericAbort(format!(
                "gradient-projection loss {loss} at step {}",
                history.optimizer_steps
            )));
        }
        history.record(loss, lr);
        trainer.global_step += 1;
    }

    let model = ControlVariateModel {
        grid: grid.clone(),
        gradient: GradientApprox::Nets(TimeNets::PerStep(nets)),
        value: None,
        lambda: 1.0,
        extra_inputs: trainer.extra_inputs(),
    };
    Ok((model, history))
}
