//! The deployable artifact of every training algorithm: per-timestep
//! gradient networks (or a joint time-input network, or the analytic
//! benchmark gradient), optional value networks, and the control-variate
//! coefficient λ.

use crate::error::{Error, Result};
use crate::market::{margrabe_delta, MarketModel, TimeGrid};
use crate::math::Matrix;
use crate::nn::{dense_param_count, ExtraInputs, Network};

/// Networks indexed by timestep, or one network taking time as input.
#[derive(Debug, Clone)]
pub enum TimeNets {
    PerStep(Vec<Network>),
    Joint(Network),
}

impl TimeNets {
    pub fn per_step(&self) -> Option<&[Network]> {
        match self {
            TimeNets::PerStep(nets) => Some(nets),
            TimeNets::Joint(_) => None,
        }
    }
}

/// Source of the gradient approximation fed into the martingale sum.
#[derive(Debug, Clone)]
pub enum GradientApprox {
    /// Dedicated networks with `d`-dimensional output.
    Nets(TimeNets),
    /// Input-differentiation of the value networks.
    ValueGradient,
    /// Analytic exchange-option delta (two assets).
    MargrabeExact { sigma_bar: f64 },
}

/// Trained control-variate model.
#[derive(Debug, Clone)]
pub struct ControlVariateModel {
    pub grid: TimeGrid,
    pub gradient: GradientApprox,
    pub value: Option<TimeNets>,
    pub lambda: f64,
    pub extra_inputs: ExtraInputs,
}

impl ControlVariateModel {
    /// Analytic benchmark control variate for the two-asset exchange
    /// problem; the tightest variance reduction a gradient approximation
    /// can reach on a fixed grid.
    pub fn margrabe_exact(grid: TimeGrid, model: &MarketModel) -> Result<Self> {
        if model.dim() != 2 {
            return Err(Error::Dimension { what: "margrabe model", expected: 2, actual: model.dim() });
        }
        let sigma_bar = crate::market::exchange_sigma_bar(model);
        Ok(ControlVariateModel {
            grid,
            gradient: GradientApprox::MargrabeExact { sigma_bar },
            value: None,
            lambda: 1.0,
            extra_inputs: ExtraInputs::none(),
        })
    }

    /// Constant extra-input vector for evaluation under `model`.
    pub fn extras_for(&self, model: &MarketModel) -> Vec<f64> {
        let mut v = Vec::new();
        if self.extra_inputs.sigma {
            v.extend_from_slice(model.sigma());
        }
        if self.extra_inputs.rate {
            v.push(model.rate());
        }
        v
    }

    fn with_extras(&self, states: &Matrix, extras: &[f64], time: Option<f64>) -> Matrix {
        let n = states.rows();
        let d = states.cols();
        let t_cols = usize::from(time.is_some());
        let mut out = Matrix::zeros(n, t_cols + d + extras.len());
        for i in 0..n {
            let row = out.row_mut(i);
            let mut c = 0;
            if let Some(t) = time {
                row[c] = t;
                c += 1;
            }
            row[c..c + d].copy_from_slice(states.row(i));
            row[c + d..].copy_from_slice(extras);
        }
        out
    }

    /// Gradient approximation at grid index `k` for every row of `states`,
    /// evaluated in deployment (eval) mode.
    pub fn gradient_at(
        &self,
        k: usize,
        states: &Matrix,
        model: &MarketModel,
    ) -> Result<Matrix> {
        let d = states.cols();
        if k >= self.grid.nsteps() {
            return Err(Error::GridMismatch(format!(
                "gradient requested at step {k} of a {}-step grid",
                self.grid.nsteps()
            )));
        }
        let extras = self.extras_for(model);
        match &self.gradient {
            GradientApprox::Nets(TimeNets::PerStep(nets)) => {
                nets[k].forward_eval(&self.with_extras(states, &extras, None))
            }
            GradientApprox::Nets(TimeNets::Joint(net)) => {
                net.forward_eval(&self.with_extras(states, &extras, Some(self.grid.time(k))))
            }
            GradientApprox::ValueGradient => {
                let value = self.value.as_ref().ok_or_else(|| {
                    Error::Config("value-gradient model without value networks".into())
                })?;
                let (input, time) = match value {
                    TimeNets::PerStep(_) => (self.with_extras(states, &extras, None), 0usize),
                    TimeNets::Joint(_) => {
                        (self.with_extras(states, &extras, Some(self.grid.time(k))), 1usize)
                    }
                };
                let net = match value {
                    TimeNets::PerStep(nets) => &nets[k],
                    TimeNets::Joint(net) => net,
                };
                let ones = Matrix::from_vec(states.rows(), 1, vec![1.0; states.rows()]);
                let (_, grads) = net.eval_with_input_grad(&input, &ones)?;
                // Keep only the asset columns.
                let mut out = Matrix::zeros(states.rows(), d);
                for i in 0..states.rows() {
                    out.row_mut(i).copy_from_slice(&grads.row(i)[time..time + d]);
                }
                Ok(out)
            }
            GradientApprox::MargrabeExact { sigma_bar } => {
                if d != 2 {
                    return Err(Error::Dimension { what: "margrabe state", expected: 2, actual: d });
                }
                let remaining = self.grid.horizon() - self.grid.time(k);
                let mut out = Matrix::zeros(states.rows(), 2);
                for i in 0..states.rows() {
                    let s = states.row(i);
                    let delta = margrabe_delta(s[0], s[1], remaining, *sigma_bar);
                    out.row_mut(i).copy_from_slice(&delta);
                }
                Ok(out)
            }
        }
    }

    /// Value approximation at grid index `k`; `None` when the model was
    /// trained without value networks.
    pub fn value_at(
        &self,
        k: usize,
        states: &Matrix,
        model: &MarketModel,
    ) -> Option<Result<Matrix>> {
        let value = self.value.as_ref()?;
        let extras = self.extras_for(model);
        Some(match value {
            TimeNets::PerStep(nets) => {
                if k >= nets.len() {
                    Err(Error::GridMismatch(format!("no value network at step {k}")))
                } else {
                    nets[k].forward_eval(&self.with_extras(states, &extras, None))
                }
            }
            TimeNets::Joint(net) => {
                net.forward_eval(&self.with_extras(states, &extras, Some(self.grid.time(k))))
            }
        })
    }

    /// Total trainable parameters across all networks.
    pub fn param_count(&self) -> usize {
        let count_nets = |nets: &TimeNets| match nets {
            TimeNets::PerStep(v) => v.iter().map(|n| n.param_count()).sum::<usize>(),
            TimeNets::Joint(n) => n.param_count(),
        };
        let g = match &self.gradient {
            GradientApprox::Nets(nets) => count_nets(nets),
            _ => 0,
        };
        g + self.value.as_ref().map(count_nets).unwrap_or(0)
    }
}

/// Hidden-layer count for a joint time-input network sized so its dense
/// parameter total matches `nsteps_nets` per-timestep networks of shape
/// `[din, width, width, dout]` as closely as an integer depth allows
/// (always within one hidden layer's parameters).
pub fn joint_hidden_layers_for_parity(
    din: usize,
    dout: usize,
    width: usize,
    per_step_hidden: usize,
    nsteps_nets: usize,
) -> usize {
    let mut per_step_sizes = vec![din];
    per_step_sizes.extend(std::iter::repeat(width).take(per_step_hidden));
    per_step_sizes.push(dout);
    let target = dense_param_count(&per_step_sizes) * nsteps_nets;
    // Joint net: [din + 1, width × h, dout].
    let head = (din + 1) * width + width;
    let tail = width * dout + dout;
    let inner = width * width + width;
    let base = head + tail;
    if target <= base + inner {
        return 1;
    }
    // Depth h costs base + (h - 1) · inner parameters.
    let h = 1 + ((target - base) as f64 / inner as f64).round() as usize;
    h.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::exchange_sigma_bar;

    #[test]
    fn parity_depth_matches_parameter_totals_within_one_layer() {
        for (d, nsteps) in [(2usize, 50usize), (5, 20), (100, 50), (2, 1)] {
            let width = d + 20;
            let h = joint_hidden_layers_for_parity(d, d, width, 2, nsteps);
            let mut per_step = vec![d, width, width, d];
            let target = dense_param_count(&per_step) * nsteps;
            per_step.clear();
            let mut joint = vec![d + 1];
            joint.extend(std::iter::repeat(width).take(h));
            joint.push(d);
            let got = dense_param_count(&joint);
            let layer = width * width + width;
            assert!(
                (got as i64 - target as i64).unsigned_abs() as usize <= layer,
                "d {d} nsteps {nsteps}: joint {got} vs per-step total {target}"
            );
        }
    }

    #[test]
    fn margrabe_gradient_matches_analytic_delta() {
        let model = MarketModel::uncorrelated(0.05, vec![0.3, 0.3]).unwrap();
        let grid = TimeGrid::uniform(0.5, 50).unwrap();
        let cv = ControlVariateModel::margrabe_exact(grid, &model).unwrap();
        let states = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.2, 0.8]]);
        let g = cv.gradient_at(0, &states, &model).unwrap();
        let sb = exchange_sigma_bar(&model);
        let want = margrabe_delta(1.0, 1.0, 0.5, sb);
        assert!((g[(0, 0)] - want[0]).abs() < 1e-14);
        assert!((g[(0, 1)] - want[1]).abs() < 1e-14);
    }
}
