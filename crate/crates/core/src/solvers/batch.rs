//! Internal training-loop machinery shared by the solvers: fresh batch
//! simulation (with optional parametric volatility/rate sampling), network
//! input assembly, and the per-path discount and diffusion products.

use crate::error::{Error, Result};
use crate::market::{simulate_paths, MarketModel, PathBatch, Payoff, TimeGrid};
use crate::math::{derive_seed, Matrix, RandomStream};
use crate::nn::{ExtraInputs, Network};
use crate::solvers::{ParametricSampling, TrainConfig};

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_TRAIN: u64 = 2;
pub(crate) const TAG_LAMBDA: u64 = 3;

/// Substream id spacing per training iteration (paths within one batch use
/// consecutive ids below this).
const ITER_STRIDE: u64 = 1 << 20;

/// One simulated training batch.
pub(crate) struct TrainingBatch {
    pub paths: PathBatch,
    /// Per-path `[σ_1..σ_d, r?]` rows when training parametrically.
    pub extras: Option<Matrix>,
    /// Per-path models when training parametrically.
    pub models: Option<Vec<MarketModel>>,
}

impl TrainingBatch {
    pub fn n(&self) -> usize {
        self.paths.n_paths
    }

    fn model_for<'a>(&'a self, shared: &'a MarketModel, path: usize) -> &'a MarketModel {
        match &self.models {
            Some(models) => &models[path],
            None => shared,
        }
    }

    /// Discount factor `e^{-r (t_k - t_0)}` for one path.
    pub fn discount_t0(&self, shared: &MarketModel, path: usize, k: usize) -> f64 {
        let grid = &self.paths.grid;
        self.model_for(shared, path).discount_factor(grid.start(), grid.time(k))
    }

    /// `σ(t_k, x_k) ΔW_{k+1}` for one path: component `l` is
    /// `x_l Σ_j σ^{lj} ΔW^j`.
    pub fn sigma_dw(&self, shared: &MarketModel, path: usize, k: usize, out: &mut [f64]) {
        let model = self.model_for(shared, path);
        let x = self.paths.state(path, k);
        let dw = self.paths.increment(path, k);
        let sig = model.sigma_eff();
        if model.is_diagonal() {
            for l in 0..x.len() {
                out[l] = x[l] * sig[(l, l)] * dw[l];
            }
        } else {
            for l in 0..x.len() {
                let row = sig.row(l);
                out[l] = x[l] * row.iter().zip(dw).map(|(s, w)| s * w).sum::<f64>();
            }
        }
    }

    /// Network input at grid index `k`: states plus the per-path extra
    /// inputs, with an optional leading time column.
    pub fn net_input(&self, k: usize, time: Option<f64>) -> Matrix {
        let n = self.n();
        let d = self.paths.dim();
        let extra_w = self.extras.as_ref().map(|m| m.cols()).unwrap_or(0);
        let t_cols = usize::from(time.is_some());
        let mut out = Matrix::zeros(n, t_cols + d + extra_w);
        for i in 0..n {
            let row = out.row_mut(i);
            let mut c = 0;
            if let Some(t) = time {
                row[c] = t;
                c += 1;
            }
            row[c..c + d].copy_from_slice(self.paths.state(i, k));
            if let Some(extras) = &self.extras {
                row[c + d..].copy_from_slice(extras.row(i));
            }
        }
        out
    }

    /// Discounted terminal payoffs `D(t_0, T) g(X_T)` per path.
    pub fn discounted_payoffs(&self, shared: &MarketModel, payoff: &Payoff) -> Vec<f64> {
        let nsteps = self.paths.grid.nsteps();
        (0..self.n())
            .map(|i| {
                self.discount_t0(shared, i, nsteps) * payoff.eval(self.paths.terminal(i))
            })
            .collect()
    }
}

/// Shared context of one training run.
pub(crate) struct Trainer<'a> {
    pub market: &'a MarketModel,
    pub grid: &'a TimeGrid,
    pub payoff: &'a Payoff,
    pub config: &'a TrainConfig,
    init_stream: RandomStream,
    train_stream: RandomStream,
    pub global_step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: &'a TrainConfig,
        market: &'a MarketModel,
        grid: &'a TimeGrid,
        payoff: &'a Payoff,
    ) -> Result<Self> {
        payoff.validate(market.dim())?;
        if config.init.dim() != market.dim() {
            return Err(Error::Dimension {
                what: "training initial sampler",
                expected: market.dim(),
                actual: config.init.dim(),
            });
        }
        if config.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(config.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(Trainer {
            market,
            grid,
            payoff,
            config,
            init_stream: RandomStream::new(derive_seed(config.seed, TAG_INIT)),
            train_stream: RandomStream::new(derive_seed(config.seed, TAG_TRAIN)),
            global_step: 0,
        })
    }

    pub fn extra_inputs(&self) -> ExtraInputs {
        match &self.config.parametric {
            None => ExtraInputs::none(),
            Some(p) => ExtraInputs { sigma: true, rate: p.rate_range.is_some() },
        }
    }

    /// Input width of the per-timestep networks.
    pub fn input_width(&self) -> usize {
        self.market.dim() + self.extra_inputs().width(self.market.dim())
    }

    /// Fresh network for this run; `index` separates initialisation
    /// substreams.
    pub fn new_network(&self, sizes: &[usize], batchnorm: bool, index: u64) -> Result<Network> {
        Network::init(sizes, batchnorm, self.init_stream.substream(index))
    }

    /// Per-timestep architecture `[input, w, ..., w, out]`.
    pub fn per_step_sizes(&self, out: usize) -> Vec<usize> {
        let w = self.config.hidden_width_for(self.market.dim());
        let mut sizes = vec![self.input_width()];
        sizes.extend(std::iter::repeat(w).take(self.config.hidden_layers));
        sizes.push(out);
        sizes
    }

    pub fn lr(&self) -> f64 {
        self.config.lr.lr(self.global_step)
    }

    /// Simulate a fresh batch for the given global iteration index.
    pub fn fresh_batch(&self, iteration: u64) -> Result<TrainingBatch> {
        let base = self.train_stream.substream(iteration.wrapping_mul(ITER_STRIDE));
        self.batch_from_stream(base, self.config.batch_size)
    }

    /// Batch from an explicit stream, used for post-training estimates.
    pub fn batch_from_stream(&self, base: RandomStream, n: usize) -> Result<TrainingBatch> {
        match &self.config.parametric {
            None => {
                let paths = simulate_paths(self.market, self.grid, n, &self.config.init, base)?;
                Ok(TrainingBatch { paths, extras: None, models: None })
            }
            Some(p) => self.parametric_batch(base, n, *p),
        }
    }

    fn parametric_batch(
        &self,
        base: RandomStream,
        n: usize,
        p: ParametricSampling,
    ) -> Result<TrainingBatch> {
        let d = self.market.dim();
        let extra_w = self.extra_inputs().width(d);
        let mut extras = Matrix::zeros(n, extra_w);
        let mut models = Vec::with_capacity(n);
        // Simulate one path at a time, each under its own sampled model;
        // the per-path substream covers parameter draws, the initial value
        // and the Wiener increments, in that order.
        let mut paths: Option<PathBatch> = None;
        for i in 0..n {
            let mut sampler = base.substream(i as u64).sampler();
            let sigma: Vec<f64> = (0..d)
                .map(|_| p.sigma_range.0 + (p.sigma_range.1 - p.sigma_range.0) * sampler.next_uniform())
                .collect();
            let rate = match p.rate_range {
                Some((lo, hi)) => lo + (hi - lo) * sampler.next_uniform(),
                None => self.market.rate(),
            };
            let model = MarketModel::new(rate, sigma.clone(), &self.market.chol().reconstruct())?;
            let row = extras.row_mut(i);
            row[..d].copy_from_slice(&sigma);
            if p.rate_range.is_some() {
                row[d] = rate;
            }
            let init_state = self.config.init.sample(&model, &mut sampler);
            let batch = paths.get_or_insert_with(|| {
                empty_paths(self.grid.clone(), n, d)
            });
            fill_single_path(batch, i, &model, self.grid, &init_state, &mut sampler);
            models.push(model);
        }
        Ok(TrainingBatch { paths: paths.unwrap(), extras: Some(extras), models: Some(models) })
    }

    /// Stream for the post-training λ estimation batch.
    pub fn lambda_stream(&self) -> RandomStream {
        RandomStream::new(derive_seed(self.config.seed, TAG_LAMBDA))
    }
}

fn empty_paths(grid: TimeGrid, n: usize, d: usize) -> PathBatch {
    // Zero-filled container; every path is overwritten before use.
    PathBatch::zeroed(grid, n, d)
}

fn fill_single_path(
    batch: &mut PathBatch,
    index: usize,
    model: &MarketModel,
    grid: &TimeGrid,
    init: &[f64],
    sampler: &mut crate::math::NormalSampler,
) {
    batch.fill_path(index, model, grid, init, sampler);
}
