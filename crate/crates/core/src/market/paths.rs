//! Exact simulation of asset paths and the first-variation process.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{MarketModel, TimeGrid};
use crate::math::{Matrix, NormalSampler, RandomStream};

/// How the asset values at `t0` are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSampler {
    /// Constant initial vector.
    Fixed(Vec<f64>),
    /// Componentwise `s0^i · exp((mu - ½ σ̂_i²) tau + σ̂_i √tau ξ)` with
    /// `σ̂_i` the model's per-asset effective log-volatility.
    LogNormal { mu: f64, tau: f64, base: Vec<f64> },
}

impl InitialSampler {
    pub fn dim(&self) -> usize {
        match self {
            InitialSampler::Fixed(v) => v.len(),
            InitialSampler::LogNormal { base, .. } => base.len(),
        }
    }

    pub fn sample(&self, model: &MarketModel, sampler: &mut NormalSampler) -> Vec<f64> {
        match self {
            InitialSampler::Fixed(v) => v.clone(),
            InitialSampler::LogNormal { mu, tau, base } => {
                let mut out = Vec::with_capacity(base.len());
                for (i, s0) in base.iter().enumerate() {
                    let var = 2.0 * model.half_var()[i];
                    let vol = var.sqrt();
                    let xi = sampler.next_normal();
                    out.push(s0 * ((mu - 0.5 * var) * tau + vol * tau.sqrt() * xi).exp());
                }
                out
            }
        }
    }
}

/// Simulated asset paths together with the Wiener increments that drove them.
///
/// `assets` is laid out `[path][step][asset]` over `nsteps + 1` grid points;
/// `wiener` is `[path][step][asset]` over `nsteps` increments.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub n_paths: usize,
    pub grid: TimeGrid,
    dim: usize,
    assets: Vec<f64>,
    wiener: Vec<f64>,
}

impl PathBatch {
    fn allocate(grid: TimeGrid, n_paths: usize, dim: usize) -> Self {
        let nsteps = grid.nsteps();
        PathBatch {
            n_paths,
            grid,
            dim,
            assets: vec![0.0; n_paths * (nsteps + 1) * dim],
            wiener: vec![0.0; n_paths * nsteps * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Asset vector of path `i` at grid index `k`.
    pub fn state(&self, i: usize, k: usize) -> &[f64] {
        let stride = (self.grid.nsteps() + 1) * self.dim;
        let off = i * stride + k * self.dim;
        &self.assets[off..off + self.dim]
    }

    /// Wiener increment of path `i` over `[t_k, t_{k+1}]`.
    pub fn increment(&self, i: usize, k: usize) -> &[f64] {
        let stride = self.grid.nsteps() * self.dim;
        let off = i * stride + k * self.dim;
        &self.wiener[off..off + self.dim]
    }

    /// All paths' states at grid index `k` as an `n × d` matrix.
    pub fn states_at(&self, k: usize) -> Matrix {
        let mut m = Matrix::zeros(self.n_paths, self.dim);
        for i in 0..self.n_paths {
            m.row_mut(i).copy_from_slice(self.state(i, k));
        }
        m
    }

    pub fn terminal(&self, i: usize) -> &[f64] {
        self.state(i, self.grid.nsteps())
    }

    /// Zero-filled container for callers that simulate path by path under
    /// per-path models.
    pub(crate) fn zeroed(grid: TimeGrid, n_paths: usize, dim: usize) -> Self {
        PathBatch::allocate(grid, n_paths, dim)
    }

    /// Overwrite path `i` with a fresh simulation under `model`.
    pub(crate) fn fill_path(
        &mut self,
        i: usize,
        model: &MarketModel,
        grid: &TimeGrid,
        init: &[f64],
        sampler: &mut NormalSampler,
    ) {
        let d = self.dim;
        let nsteps = self.grid.nsteps();
        let asset_stride = (nsteps + 1) * d;
        let wiener_stride = nsteps * d;
        let assets = &mut self.assets[i * asset_stride..(i + 1) * asset_stride];
        let wiener = &mut self.wiener[i * wiener_stride..(i + 1) * wiener_stride];
        simulate_path_into(model, grid, init, sampler, assets, wiener);
    }
}

/// Simulate one path with the exact log-normal scheme, writing asset values
/// and increments into the provided slices.
pub(crate) fn simulate_path_into(
    model: &MarketModel,
    grid: &TimeGrid,
    init: &[f64],
    sampler: &mut NormalSampler,
    assets: &mut [f64],
    wiener: &mut [f64],
) {
    let d = model.dim();
    let nsteps = grid.nsteps();
    assets[..d].copy_from_slice(init);
    let sigma_eff = model.sigma_eff();
    for k in 0..nsteps {
        let dt = grid.dt(k);
        let sqrt_dt = dt.sqrt();
        let dw = &mut wiener[k * d..(k + 1) * d];
        for v in dw.iter_mut() {
            *v = sqrt_dt * sampler.next_normal();
        }
        let (prev, next) = assets.split_at_mut((k + 1) * d);
        let prev = &prev[k * d..];
        let next = &mut next[..d];
        if model.is_diagonal() {
            for i in 0..d {
                let vol_term = sigma_eff[(i, i)] * dw[i];
                let drift = (model.rate() - model.half_var()[i]) * dt;
                next[i] = prev[i] * (drift + vol_term).exp();
            }
        } else {
            for i in 0..d {
                let row = sigma_eff.row(i);
                let vol_term: f64 = row.iter().zip(dw.iter()).map(|(s, w)| s * w).sum();
                let drift = (model.rate() - model.half_var()[i]) * dt;
                next[i] = prev[i] * (drift + vol_term).exp();
            }
        }
    }
}

/// Simulate `n_paths` independent paths. Path `i` consumes the substream
/// `stream.substream(i)`, so results are independent of chunking and thread
/// count.
pub fn simulate_paths(
    model: &MarketModel,
    grid: &TimeGrid,
    n_paths: usize,
    init: &InitialSampler,
    stream: RandomStream,
) -> Result<PathBatch> {
    if init.dim() != model.dim() {
        return Err(Error::Dimension {
            what: "initial sampler",
            expected: model.dim(),
            actual: init.dim(),
        });
    }
    let d = model.dim();
    let nsteps = grid.nsteps();
    let mut batch = PathBatch::allocate(grid.clone(), n_paths, d);
    let asset_stride = (nsteps + 1) * d;
    let wiener_stride = nsteps * d;
    let grid = &batch.grid;
    let assets = std::mem::take(&mut batch.assets);
    let wiener = std::mem::take(&mut batch.wiener);
    let (mut assets, mut wiener) = (assets, wiener);
    assets
        .par_chunks_mut(asset_stride)
        .zip(wiener.par_chunks_mut(wiener_stride))
        .enumerate()
        .for_each(|(i, (a, w))| {
            let mut sampler = stream.substream(i as u64).sampler();
            let init_state = init.sample(model, &mut sampler);
            simulate_path_into(model, grid, &init_state, &mut sampler, a, w);
        });
    batch.assets = assets;
    batch.wiener = wiener;
    Ok(batch)
}

/// First-variation matrices `Y_{t_k}` per path, laid out `[path][step][d][d]`.
#[derive(Debug, Clone)]
pub struct VariationalBatch {
    pub n_paths: usize,
    dim: usize,
    nsteps: usize,
    data: Vec<f64>,
}

impl VariationalBatch {
    /// `Y` of path `i` at grid index `k`, row-major `d × d`.
    pub fn matrix(&self, i: usize, k: usize) -> &[f64] {
        let stride = (self.nsteps + 1) * self.dim * self.dim;
        let off = i * stride + k * self.dim * self.dim;
        &self.data[off..off + self.dim * self.dim]
    }
}

/// Euler scheme for the first-variation process
/// `dY = ∂_x b · Y ds + Σ_j ∂_x σ^{·j} · Y dW^j`, `Y_{t0} = I`,
/// reusing the Wiener increments stored in `paths`.
///
/// For Black–Scholes `∂_x b = r·I` and `∂_x σ^{·j} = diag_i(σ^{ij})`, so the
/// per-step update multiplies row `i` of `Y` by `1 + r Δt + Σ_j σ^{ij} ΔW^j`.
pub fn simulate_variational(model: &MarketModel, paths: &PathBatch) -> Result<VariationalBatch> {
    if paths.dim() != model.dim() {
        return Err(Error::GridMismatch(format!(
            "paths have {} assets, model has {}",
            paths.dim(),
            model.dim()
        )));
    }
    let d = model.dim();
    let nsteps = paths.grid.nsteps();
    let n = paths.n_paths;
    let stride = (nsteps + 1) * d * d;
    let mut data = vec![0.0; n * stride];
    let sigma_eff = model.sigma_eff();
    data.par_chunks_mut(stride).enumerate().for_each(|(i, y)| {
        for r in 0..d {
            y[r * d + r] = 1.0;
        }
        for k in 0..nsteps {
            let dt = paths.grid.dt(k);
            let dw = paths.increment(i, k);
            let (done, rest) = y.split_at_mut((k + 1) * d * d);
            let prev = &done[k * d * d..];
            let next = &mut rest[..d * d];
            for r in 0..d {
                let noise: f64 = sigma_eff.row(r).iter().zip(dw).map(|(s, w)| s * w).sum();
                let factor = 1.0 + model.rate() * dt + noise;
                for c in 0..d {
                    next[r * d + c] = factor * prev[r * d + c];
                }
            }
        }
    });
    Ok(VariationalBatch { n_paths: n, dim: d, nsteps, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::uniform(t, n).unwrap()
    }

    #[test]
    fn zero_volatility_is_deterministic_growth() {
        // σ -> 0 is outside the model's domain, so approximate with 1e-12.
        let model = MarketModel::uncorrelated(0.04, vec![1e-12, 1e-12]).unwrap();
        let g = grid(1.0, 10);
        let init = InitialSampler::Fixed(vec![1.0, 2.0]);
        let batch = simulate_paths(&model, &g, 3, &init, RandomStream::new(5)).unwrap();
        for i in 0..3 {
            for k in 0..=10 {
                let t = g.time(k);
                assert!((batch.state(i, k)[0] - (0.04 * t).exp()).abs() < 1e-9);
                assert!((batch.state(i, k)[1] - 2.0 * (0.04 * t).exp()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_return_moments_match_gbm() {
        let model = MarketModel::uncorrelated(0.05, vec![0.3]).unwrap();
        let g = grid(0.5, 50);
        let n = 100_000;
        let batch = simulate_paths(
            &model,
            &g,
            n,
            &InitialSampler::Fixed(vec![1.0]),
            RandomStream::new(11),
        )
        .unwrap();
        let logs: Vec<f64> = (0..n).map(|i| batch.terminal(i)[0].ln()).collect();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let var = logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let want_mean = (0.05 - 0.045) * 0.5;
        let want_var = 0.09 * 0.5;
        let se_mean = (want_var / n as f64).sqrt();
        let se_var = want_var * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((mean - want_mean).abs() < 4.0 * se_mean, "mean {mean} vs {want_mean}");
        assert!((var - want_var).abs() < 4.0 * se_var, "var {var} vs {want_var}");
    }

    #[test]
    fn identity_correlation_gives_uncorrelated_log_returns() {
        let model = MarketModel::uncorrelated(0.05, vec![0.3, 0.3]).unwrap();
        let g = grid(0.5, 10);
        let n = 100_000;
        let batch = simulate_paths(
            &model,
            &g,
            n,
            &InitialSampler::Fixed(vec![1.0, 1.0]),
            RandomStream::new(13),
        )
        .unwrap();
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let x = batch.terminal(i)[0].ln();
            let y = batch.terminal(i)[1].ln();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * sy / nf;
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() < 0.02, "corr {corr}");
    }

    #[test]
    fn increments_have_step_variance() {
        let model = MarketModel::uncorrelated(0.0, vec![0.2]).unwrap();
        let g = grid(1.0, 4);
        let n = 50_000;
        let batch =
            simulate_paths(&model, &g, n, &InitialSampler::Fixed(vec![1.0]), RandomStream::new(2))
                .unwrap();
        for k in 0..4 {
            let var: f64 =
                (0..n).map(|i| batch.increment(i, k)[0].powi(2)).sum::<f64>() / n as f64;
            assert!((var - 0.25).abs() < 0.01, "step {k} var {var}");
        }
    }

    #[test]
    fn reproducible_and_stream_separated() {
        let model = MarketModel::uncorrelated(0.05, vec![0.3, 0.3]).unwrap();
        let g = grid(0.5, 5);
        let init = InitialSampler::LogNormal { mu: 0.08, tau: 0.1, base: vec![1.0, 1.0] };
        let a = simulate_paths(&model, &g, 7, &init, RandomStream::new(1)).unwrap();
        let b = simulate_paths(&model, &g, 7, &init, RandomStream::new(1)).unwrap();
        assert_eq!(a.assets, b.assets);
        assert_eq!(a.wiener, b.wiener);
        let c = simulate_paths(&model, &g, 7, &init, RandomStream::new(1).substream(100)).unwrap();
        assert_ne!(a.assets, c.assets);
    }

    #[test]
    fn lognormal_initial_values_are_positive() {
        let model = MarketModel::uncorrelated(0.05, vec![1.0, 1.0]).unwrap();
        let init = InitialSampler::LogNormal { mu: 0.08, tau: 0.1, base: vec![0.7, 0.7] };
        let mut sampler = RandomStream::new(3).sampler();
        for _ in 0..1000 {
            let s = init.sample(&model, &mut sampler);
            assert!(s.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn variational_starts_at_identity() {
        let model = MarketModel::uncorrelated(0.05, vec![0.3, 0.3]).unwrap();
        let g = grid(0.5, 5);
        let batch = simulate_paths(
            &model,
            &g,
            4,
            &InitialSampler::Fixed(vec![1.0, 1.0]),
            RandomStream::new(9),
        )
        .unwrap();
        let var = simulate_variational(&model, &batch).unwrap();
        for i in 0..4 {
            let y0 = var.matrix(i, 0);
            assert_eq!(y0, &[1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn variational_converges_to_gbm_first_variation() {
        // d = 1: closed form Y_t = S_t / S_0; Euler error is O(Δt).
        let model = MarketModel::uncorrelated(0.05, vec![0.3]).unwrap();
        let mut errs = Vec::new();
        for nsteps in [50usize, 100] {
            let g = grid(0.5, nsteps);
            let batch = simulate_paths(
                &model,
                &g,
                200,
                &InitialSampler::Fixed(vec![1.0]),
                RandomStream::new(21),
            )
            .unwrap();
            let var = simulate_variational(&model, &batch).unwrap();
            let mut err: f64 = 0.0;
            for i in 0..200 {
                let y = var.matrix(i, nsteps)[0];
                let exact = batch.terminal(i)[0] / batch.state(i, 0)[0];
                err += (y - exact).abs() / exact;
            }
            errs.push(err / 200.0);
        }
        assert!(errs[1] < errs[0] * 0.7, "halving dt should shrink error: {errs:?}");
        assert!(errs[0] < 0.01, "coarse error too large: {errs:?}");
    }

    #[test]
    fn variational_zero_volatility_grows_like_exponential() {
        let model = MarketModel::uncorrelated(0.04, vec![1e-12]).unwrap();
        let g = grid(1.0, 200);
        let batch =
            simulate_paths(&model, &g, 1, &InitialSampler::Fixed(vec![1.0]), RandomStream::new(4))
                .unwrap();
        let var = simulate_variational(&model, &batch).unwrap();
        let y = var.matrix(0, 200)[0];
        // Euler on dY = rY dt at 200 steps: error O(Δt).
        assert!((y - (0.04_f64).exp()).abs() < 1e-3, "y {y}");
    }
}
