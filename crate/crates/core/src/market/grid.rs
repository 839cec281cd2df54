//! Time partitions of `[t0, T]`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Strictly increasing partition `t0 < t1 < ... < t_Nsteps = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid over `[0, maturity]` with `nsteps` steps.
    pub fn uniform(maturity: f64, nsteps: usize) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::Config(format!("maturity must be positive, got {maturity}")));
        }
        if nsteps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        let dt = maturity / nsteps as f64;
        let mut times: Vec<f64> = (0..=nsteps).map(|k| k as f64 * dt).collect();
        times[nsteps] = maturity;
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Config("time grid needs at least two points".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config(format!(
                    "time grid not strictly increasing at {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { times })
    }

    pub fn nsteps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
}
