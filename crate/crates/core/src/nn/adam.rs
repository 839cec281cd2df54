//! Adam optimizer with the two-phase learning-rate schedule used by all
//! training runs.

use crate::error::{Error, Result};
use crate::nn::{Network, ParamSet};
use serde::{Deserialize, Serialize};

/// Step schedule: `initial` for the first `switch_step` updates, `after`
/// from then on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub after: f64,
    pub switch_step: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { initial: 1e-3, after: 1e-4, switch_step: 10_000 }
    }
}

impl LrSchedule {
    /// Learning rate for the zero-based global step index.
    pub fn lr(&self, global_step: u64) -> f64 {
        if global_step < self.switch_step {
            self.initial
        } else {
            self.after
        }
    }
}

/// First/second moment estimates for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        AdamState {
            m: net.params().zeros_like(),
            v: net.params().zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of `net` in place.
///
/// Fails without touching the parameters if any gradient is non-finite.
pub fn adam_step(
    net: &mut Network,
    grads: &ParamSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.has_non_finite() {
        return Err(Error::NumericAbort("non-finite gradient in Adam update".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let params = net.params_mut();
    let mut p_slices = params.slices_mut();
    let g_slices = grads.slices();
    let mut m_slices = state.m.slices_mut();
    let mut v_slices = state.v.slices_mut();
    for (((p, g), m), v) in p_slices
        .iter_mut()
        .zip(g_slices.iter())
        .zip(m_slices.iter_mut())
        .zip(v_slices.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
