//! Martingale control-variate solvers: train the gradient networks directly
//! on the quality of the resulting control variate, either by minimising
//! the empirical variance of the controlled estimator or by maximising its
//! correlation with the plain estimator.

use crate::error::{Error, Result};
use crate::eval::{martingale_sum, optimal_lambda};
use crate::market::{MarketModel, Payoff, TimeGrid};
use crate::math::Matrix;
use crate::nn::{adam_step, AdamState, ForwardCache, Network};
use crate::solvers::batch::{Trainer, TrainingBatch};
use crate::solvers::{
    stopping_criterion, ControlVariateModel, GradientApprox, LossHistory, TimeNets, TrainConfig,
};

/// Per-iteration forwards of all timestep networks plus the controlled
/// estimator pieces.
struct StepEval {
    outs: Vec<Matrix>,
    caches: Vec<ForwardCache>,
    /// `D(t0, t_k) σ(t_k, x_k) ΔW_{k+1}` rows per timestep.
    weights: Vec<Matrix>,
    xi: Vec<f64>,
    m: Vec<f64>,
}

fn forward_all(
    nets: &mut [Network],
    batch: &TrainingBatch,
    market: &MarketModel,
    payoff: &Payoff,
) -> Result<StepEval> {
    let nsteps = batch.paths.grid.nsteps();
    let n = batch.n();
    let d = batch.paths.dim();
    let mut outs = Vec::with_capacity(nsteps);
    let mut caches = Vec::with_capacity(nsteps);
    let mut weights = Vec::with_capacity(nsteps);
    let mut m = vec![0.0; n];
    let mut w = vec![0.0; d];
    for k in 0..nsteps {
        let input = batch.net_input(k, None);
        let (out, cache) = nets[k].forward_train(&input)?;
        let mut wk = Matrix::zeros(n, d);
        for i in 0..n {
            batch.sigma_dw(market, i, k, &mut w);
            let df = batch.discount_t0(market, i, k);
            for c in 0..d {
                wk[(i, c)] = df * w[c];
            }
            m[i] += out.row(i).iter().zip(wk.row(i)).map(|(o, x)| o * x).sum::<f64>();
        }
        outs.push(out);
        caches.push(cache);
        weights.push(wk);
    }
    let xi = batch.discounted_payoffs(market, payoff);
    Ok(StepEval { outs, caches, weights, xi, m })
}

/// Backpropagate `dL/dM_i` into every timestep network and apply Adam.
fn update_all(
    nets: &mut [Network],
    adams: &mut [AdamState],
    eval: &StepEval,
    dm: &[f64],
    lr: f64,
) -> Result<()> {
    let n = dm.len();
    for (k, net) in nets.iter_mut().enumerate() {
        let d = eval.outs[k].cols();
        let mut up = Matrix::zeros(n, d);
        for i in 0..n {
            let wrow = eval.weights[k].row(i);
            let urow = up.row_mut(i);
            for c in 0..d {
                urow[c] = dm[i] * wrow[c];
            }
        }
        let grads = net.backward(&eval.caches[k], &up)?;
        adam_step(net, &grads.params, &mut adams[k], lr)?;
    }
    Ok(())
}

/// Empirical variance minimisation: the loss is the batch sample variance
/// of `𝒱 = Ξ - M` with λ fixed at 1; the returned model keeps λ = 1.
pub fn train_var_min(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
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
        let n = batch.n();
        let nf = n as f64;
        let eval = forward_all(&mut nets, &batch, market, payoff)?;
        let values: Vec<f64> = eval.xi.iter().zip(&eval.m).map(|(x, m)| x - m).collect();
        let mean = values.iter().sum::<f64>() / nf;
        let loss =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        if !loss.is_finite() {
            return Err(Error::NumericAbort(format!(
                "variance loss {loss} at step {}",
                history.optimizer_steps
            )));
        }
        // d loss / d M_i = -2 (v_i - mean) / (n - 1).
        let dm: Vec<f64> = values.iter().map(|v| -2.0 * (v - mean) / (nf - 1.0)).collect();
        let lr = trainer.lr();
        update_all(&mut nets, &mut adams, &eval, &dm, lr)?;
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

/// Empirical correlation maximisation: the loss is `1 - ρ̂²` between the
/// plain estimator and the martingale; λ is estimated on a fresh batch
/// after training.
pub fn train_corr_max(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
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
        let n = batch.n();
        let nf = n as f64;
        let eval = forward_all(&mut nets, &batch, market, payoff)?;
        let mean_xi = eval.xi.iter().sum::<f64>() / nf;
        let mean_m = eval.m.iter().sum::<f64>() / nf;
        let (mut s_xx, mut s_mm, mut s_xm) = (0.0, 0.0, 0.0);
        for (x, m) in eval.xi.iter().zip(&eval.m) {
            s_xx += (x - mean_xi) * (x - mean_xi);
            s_mm += (m - mean_m) * (m - mean_m);
            s_xm += (x - mean_xi) * (m - mean_m);
        }
        let lr = trainer.lr();
        if s_mm <= f64::EPSILON * s_xx.max(1.0) || s_xx == 0.0 {
            // Degenerate batch: no correlation defined, skip the update.
            history.degenerate_batches += 1;
            history.record(1.0, lr);
            trainer.global_step += 1;
            continue;
        }
        let rho = s_xm / (s_xx * s_mm).sqrt();
        let loss = 1.0 - rho * rho;
        if !loss.is_finite() {
            return Err(Error::NumericAbort(format!(
                "correlation loss {loss} at step {}",
                history.optimizer_steps
            )));
        }
        // dρ/dM_i = (Ξ_i - Ξ̄)/√(S_xx S_mm) - ρ (M_i - M̄)/S_mm.
        let inv_sqrt = 1.0 / (s_xx * s_mm).sqrt();
        let dm: Vec<f64> = eval
            .xi
            .iter()
            .zip(&eval.m)
            .map(|(x, m)| {
                let drho = (x - mean_xi) * inv_sqrt - rho * (m - mean_m) / s_mm;
                -2.0 * rho * drho
            })
            .collect();
        update_all(&mut nets, &mut adams, &eval, &dm, lr)?;
        history.record(loss, lr);
        trainer.global_step += 1;
    }

    let mut model = ControlVariateModel {
        grid: grid.clone(),
        gradient: GradientApprox::Nets(TimeNets::PerStep(nets)),
        value: None,
        lambda: 1.0,
        extra_inputs: trainer.extra_inputs(),
    };
    model.lambda = estimate_lambda(&trainer, &model)?;
    Ok((model, history))
}

/// Variance-optimal λ on one fresh batch of training size, using the
/// deployed (eval-mode) networks. Parametric models are estimated at the
/// base market parameters.
pub(crate) fn estimate_lambda(trainer: &Trainer, model: &ControlVariateModel) -> Result<f64> {
    let paths = crate::market::simulate_paths(
        trainer.market,
        trainer.grid,
        trainer.config.batch_size,
        &trainer.config.init,
        trainer.lambda_stream(),
    )?;
    let m = martingale_sum(model, &paths, trainer.market)?;
    let df = trainer.market.discount_factor(trainer.grid.start(), trainer.grid.horizon());
    let xi: Vec<f64> =
        (0..paths.n_paths).map(|i| df * trainer.payoff.eval(paths.terminal(i))).collect();
    let (lambda, degenerate) = optimal_lambda(&xi, &m);
    Ok(if degenerate { 0.0 } else { lambda })
}
