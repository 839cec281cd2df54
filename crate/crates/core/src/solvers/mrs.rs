//! Martingale representation solvers: value and gradient networks trained
//! on the one-step backward residual
//! `ℰ_{m+1} = D_{m+1} η_{m+1}(x_{m+1}) - D_m η_m(x_m) - D_m θ_m(x_m) σ(t_m, x_m) ΔW_{m+1}`,
//! either one timestep at a time backwards with warm starts, or with two
//! joint time-input networks trained on the summed loss.

use crate::error::{Error, Result};
use crate::market::{MarketModel, Payoff, TimeGrid};
use crate::math::Matrix;
use crate::nn::{adam_step, AdamState, Network, ParamSet};
use crate::solvers::batch::{Trainer, TrainingBatch};
use crate::solvers::cv_model::joint_hidden_layers_for_parity;
use crate::solvers::{
    stopping_criterion, ControlVariateModel, GradientApprox, LossHistory, TimeNets, TrainConfig,
};

/// Iterative martingale representation solver.
///
/// First fits the terminal value network to the discounted payoff, then
/// walks the grid backwards fitting `(η_m, θ_m)` against the frozen
/// successor, each stage warm-started from the successor's parameters.
pub fn train_mrs_iterative(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
    let d = market.dim();
    let nsteps = grid.nsteps();
    let value_sizes = trainer.per_step_sizes(1);
    let grad_sizes = trainer.per_step_sizes(d);

    let mut history = LossHistory { batch_size: config.batch_size, ..Default::default() };

    // Terminal stage: η_N against D(t0, T) g(X_T).
    history.timestep_order.push(nsteps);
    let mut eta_next = trainer.new_network(&value_sizes, config.batchnorm, 10_000)?;
    {
        let mut adam = AdamState::new(&eta_next);
        let mut stage_losses = Vec::new();
        loop {
            if stopping_criterion(&stage_losses, config.window, config.epsilon) {
                break;
            }
            if stage_losses.len() >= config.max_iterations {
                history.non_converged.push(nsteps);
                break;
            }
            let batch = trainer.fresh_batch(trainer.global_step)?;
            let targets = batch.discounted_payoffs(market, payoff);
            let input = batch.net_input(nsteps, None);
            let lr = trainer.lr();
            let n = batch.n();
            let (out, cache) = eta_next.forward_train(&input)?;
            let mut up = Matrix::zeros(n, 1);
            let mut loss = 0.0;
            for i in 0..n {
                let diff = out[(i, 0)] - targets[i];
                loss += diff * diff;
                up[(i, 0)] = 2.0 * diff / n as f64;
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(Error::NumericAbort(format!("terminal value loss {loss}")));
            }
            let grads = eta_next.backward(&cache, &up)?;
            adam_step(&mut eta_next, &grads.params, &mut adam, lr)?;
            stage_losses.push(loss);
            history.record(loss, lr);
            trainer.global_step += 1;
        }
    }

    let mut value_nets: Vec<Option<Network>> = (0..=nsteps).map(|_| None).collect();
    let mut grad_nets: Vec<Option<Network>> = (0..nsteps).map(|_| None).collect();
    value_nets[nsteps] = Some(eta_next.clone());

    let mut theta_prev: Option<Network> = None;
    for m in (0..nsteps).rev() {
        history.timestep_order.push(m);
        let mut eta = if config.warm_start {
            eta_next.clone()
        } else {
            trainer.new_network(&value_sizes, config.batchnorm, m as u64)?
        };
        let mut theta = match (&theta_prev, config.warm_start) {
            (Some(prev), true) => prev.clone(),
            _ => trainer.new_network(&grad_sizes, config.batchnorm, 20_000 + m as u64)?,
        };
        let mut adam_eta = AdamState::new(&eta);
        let mut adam_theta = AdamState::new(&theta);
        let mut stage_losses = Vec::new();
        let mut w = vec![0.0; d];
        loop {
            if stopping_criterion(&stage_losses, config.window, config.epsilon) {
                break;
            }
            if stage_losses.len() >= config.max_iterations {
                history.non_converged.push(m);
                break;
            }
            let batch = trainer.fresh_batch(trainer.global_step)?;
            let n = batch.n();
            let lr = trainer.lr();
            let input_m = batch.net_input(m, None);
            let input_next = batch.net_input(m + 1, None);
            let eta_next_out = eta_next.forward_eval(&input_next)?;
            let (eta_out, eta_cache) = eta.forward_train(&input_m)?;
            let (theta_out, theta_cache) = theta.forward_train(&input_m)?;
            let mut up_eta = Matrix::zeros(n, 1);
            let mut up_theta = Matrix::zeros(n, d);
            let mut loss = 0.0;
            for i in 0..n {
                batch.sigma_dw(market, i, m, &mut w);
                let d_m = batch.discount_t0(market, i, m);
                let d_next = batch.discount_t0(market, i, m + 1);
                let stoch: f64 =
                    theta_out.row(i).iter().zip(&w).map(|(t, wi)| t * wi).sum();
                let resid = d_next * eta_next_out[(i, 0)] - d_m * eta_out[(i, 0)] - d_m * stoch;
                loss += resid * resid;
                let scale = 2.0 * resid / n as f64;
                up_eta[(i, 0)] = -scale * d_m;
                for c in 0..d {
                    up_theta[(i, c)] = -scale * d_m * w[c];
                }
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(Error::NumericAbort(format!("residual loss {loss} at timestep {m}")));
            }
            let g_eta = eta.backward(&eta_cache, &up_eta)?;
            let g_theta = theta.backward(&theta_cache, &up_theta)?;
            adam_step(&mut eta, &g_eta.params, &mut adam_eta, lr)?;
            adam_step(&mut theta, &g_theta.params, &mut adam_theta, lr)?;
            stage_losses.push(loss);
            history.record(loss, lr);
            trainer.global_step += 1;
        }
        eta_next = eta.clone();
        theta_prev = Some(theta.clone());
        value_nets[m] = Some(eta);
        grad_nets[m] = Some(theta);
    }

    let mut model = ControlVariateModel {
        grid: grid.clone(),
        gradient: GradientApprox::Nets(TimeNets::PerStep(
            grad_nets.into_iter().map(|n| n.unwrap()).collect(),
        )),
        value: Some(TimeNets::PerStep(value_nets.into_iter().map(|n| n.unwrap()).collect())),
        lambda: 1.0,
        extra_inputs: trainer.extra_inputs(),
    };
    if config.estimate_lambda {
        model.lambda = super::mcv::estimate_lambda(&trainer, &model)?;
    }
    Ok((model, history))
}

/// Joint martingale representation solver: two time-input networks trained
/// on the summed residual loss plus the terminal term. The networks carry
/// no batch normalization; their depth defaults to the parameter-parity
/// choice against the per-timestep collection.
pub fn train_mrs_joint(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
    let d = market.dim();
    let nsteps = grid.nsteps();
    let din = trainer.input_width();
    let width = config.hidden_width_for(d);

    let depth_value = config.joint_hidden_layers.unwrap_or_else(|| {
        joint_hidden_layers_for_parity(din, 1, width, config.hidden_layers, nsteps + 1)
    });
    let depth_grad = config.joint_hidden_layers.unwrap_or_else(|| {
        joint_hidden_layers_for_parity(din, d, width, config.hidden_layers, nsteps)
    });
    let mut value_sizes = vec![din + 1];
    value_sizes.extend(std::iter::repeat(width).take(depth_value));
    value_sizes.push(1);
    let mut grad_sizes = vec![din + 1];
    grad_sizes.extend(std::iter::repeat(width).take(depth_grad));
    grad_sizes.push(d);

    // Time is a raw input here, so no batch normalization.
    let mut eta = trainer.new_network(&value_sizes, false, 1)?;
    let mut theta = trainer.new_network(&grad_sizes, false, 2)?;
    let mut adam_eta = AdamState::new(&eta);
    let mut adam_theta = AdamState::new(&theta);

    let mut history = LossHistory { batch_size: config.batch_size, ..Default::default() };
    // Chunked accumulation keeps the stacked forward passes bounded.
    let chunk_rows = (16_384 / (nsteps + 1)).max(8);
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
        let lr = trainer.lr();
        let mut loss = 0.0;
        let mut g_eta_total: Option<ParamSet> = None;
        let mut g_theta_total: Option<ParamSet> = None;
        let mut start = 0;
        while start < n {
            let len = chunk_rows.min(n - start);
            let (l, g_eta, g_theta) = joint_chunk(
                &batch, market, payoff, &mut eta, &mut theta, start, len, n, nsteps, d,
            )?;
            loss += l;
            match &mut g_eta_total {
                None => g_eta_total = Some(g_eta),
                Some(t) => t.add_assign(&g_eta),
            }
            match &mut g_theta_total {
                None => g_theta_total = Some(g_theta),
                Some(t) => t.add_assign(&g_theta),
            }
            start += len;
        }
        if !loss.is_finite() {
            return Err(Error::NumericAbort(format!(
                "joint residual loss {loss} at step {}",
                history.optimizer_steps
            )));
        }
        adam_step(&mut eta, &g_eta_total.unwrap(), &mut adam_eta, lr)?;
        adam_step(&mut theta, &g_theta_total.unwrap(), &mut adam_theta, lr)?;
        history.record(loss, lr);
        trainer.global_step += 1;
    }

    let mut model = ControlVariateModel {
        grid: grid.clone(),
        gradient: GradientApprox::Nets(TimeNets::Joint(theta)),
        value: Some(TimeNets::Joint(eta)),
        lambda: 1.0,
        extra_inputs: trainer.extra_inputs(),
    };
    if config.estimate_lambda {
        model.lambda = super::mcv::estimate_lambda(&trainer, &model)?;
    }
    Ok((model, history))
}

/// Loss contribution and gradients of one path chunk for the joint solver.
/// The loss is additive over paths, so per-chunk gradients with full-batch
/// normalization sum to the exact batch gradient.
#[allow(clippy::too_many_arguments)]
fn joint_chunk(
    batch: &TrainingBatch,
    market: &MarketModel,
    payoff: &Payoff,
    eta: &mut Network,
    theta: &mut Network,
    start: usize,
    len: usize,
    full_n: usize,
    nsteps: usize,
    d: usize,
) -> Result<(f64, ParamSet, ParamSet)> {
    let grid = &batch.paths.grid;
    let din = eta.input_width();
    // Stacked inputs: block m holds rows (t_m, x_m, extras) for the chunk.
    let mut eta_in = Matrix::zeros((nsteps + 1) * len, din);
    let mut theta_in = Matrix::zeros(nsteps * len, din);
    for m in 0..=nsteps {
        let t_m = grid.time(m);
        for i in 0..len {
            let row = eta_in.row_mut(m * len + i);
            row[0] = t_m;
            row[1..1 + d].copy_from_slice(batch.paths.state(start + i, m));
            if let Some(extras) = &batch.extras {
                row[1 + d..].copy_from_slice(extras.row(start + i));
            }
            if m < nsteps {
                let row = theta_in.row_mut(m * len + i);
                row[0] = t_m;
                row[1..1 + d].copy_from_slice(batch.paths.state(start + i, m));
                if let Some(extras) = &batch.extras {
                    row[1 + d..].copy_from_slice(extras.row(start + i));
                }
            }
        }
    }
    let (eta_out, eta_cache) = eta.forward_train(&eta_in)?;
    let (theta_out, theta_cache) = theta.forward_train(&theta_in)?;

    let nf = full_n as f64;
    let nsf = nsteps as f64;
    let mut up_eta = Matrix::zeros((nsteps + 1) * len, 1);
    let mut up_theta = Matrix::zeros(nsteps * len, d);
    let mut loss = 0.0;
    let mut w = vec![0.0; d];
    for i in 0..len {
        let path = start + i;
        // Terminal term.
        let g_term = batch.discount_t0(market, path, nsteps)
            * payoff.eval(batch.paths.terminal(path));
        let eta_term = eta_out[(nsteps * len + i, 0)];
        let diff = eta_term - g_term;
        loss += diff * diff / nf;
        up_eta[(nsteps * len + i, 0)] += 2.0 * diff / nf;
        // Residuals.
        for m in 0..nsteps {
            batch.sigma_dw(market, path, m, &mut w);
            let d_m = batch.discount_t0(market, path, m);
            let d_next = batch.discount_t0(market, path, m + 1);
            let stoch: f64 = theta_out.row(m * len + i).iter().zip(&w).map(|(t, wi)| t * wi).sum();
            let resid = d_next * eta_out[((m + 1) * len + i, 0)]
                - d_m * eta_out[(m * len + i, 0)]
                - d_m * stoch;
            loss += resid * resid / (nf * nsf);
            let scale = 2.0 * resid / (nf * nsf);
            up_eta[((m + 1) * len + i, 0)] += scale * d_next;
            up_eta[(m * len + i, 0)] -= scale * d_m;
            for c in 0..d {
                up_theta[(m * len + i, c)] = -scale * d_m * w[c];
            }
        }
    }
    let g_eta = eta.backward(&eta_cache, &up_eta)?;
    let g_theta = theta.backward(&theta_cache, &up_theta)?;
    Ok((loss, g_eta.params, g_theta.params))
}
