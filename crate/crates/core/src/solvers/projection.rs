//! Projection solvers: fit per-timestep value networks to the discounted
//! terminal payoff by least squares, either jointly over all timesteps or
//! iteratively backwards in time with warm starts. The gradient for the
//! control variate comes from input-differentiation of the value networks.

use crate::error::{Error, Result};
use crate::market::{MarketModel, PathBatch, Payoff, TimeGrid};
use crate::math::Matrix;
use crate::nn::{adam_step, AdamState, Network};
use crate::solvers::batch::{Trainer, TrainingBatch};
use crate::solvers::{
    stopping_criterion, ControlVariateModel, GradientApprox, LossHistory, TimeNets, TrainConfig,
};

/// Regression targets `𝒳_k = D(t_k, T) g(X_T)` per path and timestep,
/// `n × Nsteps`.
pub fn projection_targets(paths: &PathBatch, payoff: &Payoff, model: &MarketModel) -> Matrix {
    let nsteps = paths.grid.nsteps();
    let horizon = paths.grid.horizon();
    let mut out = Matrix::zeros(paths.n_paths, nsteps);
    for i in 0..paths.n_paths {
        let g = payoff.eval(paths.terminal(i));
        for k in 0..nsteps {
            out[(i, k)] = model.discount_factor(paths.grid.time(k), horizon) * g;
        }
    }
    out
}

fn batch_targets(batch: &TrainingBatch, payoff: &Payoff, shared: &MarketModel) -> Matrix {
    let nsteps = batch.paths.grid.nsteps();
    let horizon = batch.paths.grid.horizon();
    let mut out = Matrix::zeros(batch.n(), nsteps);
    for i in 0..batch.n() {
        let g = payoff.eval(batch.paths.terminal(i));
        let model = match &batch.models {
            Some(models) => &models[i],
            None => shared,
        };
        for k in 0..nsteps {
            out[(i, k)] = model.discount_factor(batch.paths.grid.time(k), horizon) * g;
        }
    }
    out
}

/// Mean squared error and its upstream gradient for one timestep column.
fn mse_column(out: &Matrix, targets: &Matrix, k: usize) -> (f64, Matrix) {
    let n = out.rows();
    let mut up = Matrix::zeros(n, 1);
    let mut loss = 0.0;
    for i in 0..n {
        let diff = out[(i, 0)] - targets[(i, k)];
        loss += diff * diff;
        up[(i, 0)] = 2.0 * diff / n as f64;
    }
    (loss / n as f64, up)
}

/// Projection solver: all timestep networks trained together on the summed
/// least-squares loss.
pub fn train_projection(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
    let nsteps = grid.nsteps();
    let sizes = trainer.per_step_sizes(1);
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
        let targets = batch_targets(&batch, payoff, market);
        let lr = trainer.lr();
        let mut loss = 0.0;
        for k in 0..nsteps {
            let input = batch.net_input(k, None);
            let (out, cache) = nets[k].forward_train(&input)?;
            let (l, up) = mse_column(&out, &targets, k);
            loss += l;
            let grads = nets[k].backward(&cache, &up)?;
            adam_step(&mut nets[k], &grads.params, &mut adams[k], lr)?;
        }
        if !loss.is_finite() {
            return Err(Error::NumericAbort(format!(
                "projection loss {loss} at step {}",
                history.optimizer_steps
            )));
        }
        history.record(loss, lr);
        trainer.global_step += 1;
    }

    let model = ControlVariateModel {
        grid: grid.clone(),
        gradient: GradientApprox::ValueGradient,
        value: Some(TimeNets::PerStep(nets)),
        lambda: 1.0,
        extra_inputs: trainer.extra_inputs(),
    };
    Ok((model, history))
}

/// Iterative projection solver: one timestep at a time from `Nsteps - 1`
/// down to 0, warm-starting each network from its converged successor.
pub fn train_projection_iterative(
    config: &TrainConfig,
    market: &MarketModel,
    grid: &TimeGrid,
    payoff: &Payoff,
) -> Result<(ControlVariateModel, LossHistory)> {
    let mut trainer = Trainer::new(config, market, grid, payoff)?;
    let nsteps = grid.nsteps();
    let sizes = trainer.per_step_sizes(1);
    let mut nets: Vec<Option<Network>> = (0..nsteps).map(|_| None).collect();

    let mut history = LossHistory { batch_size: config.batch_size, ..Default::default() };
    let mut successor: Option<Network> = None;
    for m in (0..nsteps).rev() {
        history.timestep_order.push(m);
        let mut net = match (&successor, config.warm_start) {
            (Some(prev), true) => prev.clone(),
            _ => trainer.new_network(&sizes, config.batchnorm, m as u64)?,
        };
        let mut adam = AdamState::new(&net);
        let mut stage_losses = Vec::new();
        loop {
            if stopping_criterion(&stage_losses, config.window, config.epsilon) {
                break;
            }
            if stage_losses.len() >= config.max_iterations {
                history.non_converged.push(m);
                break;
            }
            let batch = trainer.fresh_batch(trainer.global_step)?;
            let targets = batch_targets(&batch, payoff, market);
            let input = batch.net_input(m, None);
            let lr = trainer.lr();
            let (out, cache) = net.forward_train(&input)?;
            let (loss, up) = mse_column(&out, &targets, m);
            if !loss.is_finite() {
                return Err(Error::NumericAbort(format!(
                    "iterative projection loss {loss} at timestep {m}"
                )));
            }
            let grads = net.backward(&cache, &up)?;
            adam_step(&mut net, &grads.params, &mut adam, lr)?;
            stage_losses.push(loss);
            history.record(loss, lr);
            trainer.global_step += 1;
        }
        successor = Some(net.clone());
        nets[m] = Some(net);
    }

    let nets: Vec<Network> = nets.into_iter().map(|n| n.unwrap()).collect();
    let model = ControlVariateModel {
        grid: grid.clone(),
        gradient: GradientApprox::ValueGradient,
        value: Some(TimeNets::PerStep(nets)),
        lambda: 1.0,
        extra_inputs: trainer.extra_inputs(),
    };
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_paths, InitialSampler};
    use crate::math::RandomStream;

    #[test]
    fn targets_without_discounting_equal_terminal_payoff() {
        let model = MarketModel::uncorrelated(0.0, vec![0.3]).unwrap();
        let grid = TimeGrid::uniform(0.5, 5).unwrap();
        let paths = simulate_paths(
            &model,
            &grid,
            16,
            &InitialSampler::Fixed(vec![1.0]),
            RandomStream::new(1),
        )
        .unwrap();
        let payoff = Payoff::Basket { strike: 0.5 };
        let t = projection_targets(&paths, &payoff, &model);
        for i in 0..16 {
            let g = payoff.eval(paths.terminal(i));
            for k in 0..5 {
                assert_eq!(t[(i, k)], g);
            }
        }
    }

    #[test]
    fn one_step_discount_factor() {
        let model = MarketModel::uncorrelated(0.05, vec![0.3]).unwrap();
        let grid = TimeGrid::uniform(0.5, 50).unwrap();
        let paths = simulate_paths(
            &model,
            &grid,
            4,
            &InitialSampler::Fixed(vec![1.0]),
            RandomStream::new(2),
        )
        .unwrap();
        let payoff = Payoff::Basket { strike: 0.0 };
        let t = projection_targets(&paths, &payoff, &model);
        for i in 0..4 {
            let g = payoff.eval(paths.terminal(i));
            let want = g * (-0.05_f64 * 0.01).exp();
            assert!((t[(i, 49)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_payoff_targets_are_pure_discounts() {
        // A basket with strike far below keeps g ≡ Σ S; use a synthetic
        // constant payoff instead: strike so deep that g(x) = Σx - K never
        // clips, then compare column ratios to discount factors.
        let model = MarketModel::uncorrelated(0.1, vec![0.2]).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let paths = simulate_paths(
            &model,
            &grid,
            8,
            &InitialSampler::Fixed(vec![1.0]),
            RandomStream::new(3),
        )
        .unwrap();
        let payoff = Payoff::Basket { strike: -1.0 };
        let t = projection_targets(&paths, &payoff, &model);
        for i in 0..8 {
            for k in 0..4 {
                let ratio = t[(i, k)] / t[(i, 3)];
                let want = model.discount_factor(grid.time(k), 1.0)
                    / model.discount_factor(grid.time(3), 1.0);
                assert!((ratio - want).abs() < 1e-12);
            }
        }
    }
}
