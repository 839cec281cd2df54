//! Feed-forward network with manual reverse-mode differentiation.
//!
//! Layout follows the experiments: ReLU on hidden layers, identity output,
//! and optional batch normalization on the raw input, before each hidden
//! activation and after the final linear map. Forward passes over a batch
//! return a cache from which `backward` produces exact gradients with
//! respect to every parameter and to the inputs.

use crate::error::{Error, Result};
use crate::math::{Matrix, RandomStream};

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

/// Trainable parameters: per-layer weights/biases plus per-site batch-norm
/// scale and shift when enabled. Gradients and Adam moments reuse the same
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    /// `(W_k, B_k)` with `W_k` of shape `l_{k-1} × l_k`.
    pub dense: Vec<(Matrix, Vec<f64>)>,
    /// `(γ, β)` per normalization site; empty when batch norm is off.
    pub bn: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            dense: self
                .dense
                .iter()
                .map(|(w, b)| (Matrix::zeros(w.rows(), w.cols()), vec![0.0; b.len()]))
                .collect(),
            bn: self
                .bn
                .iter()
                .map(|(g, b)| (vec![0.0; g.len()], vec![0.0; b.len()]))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        let dense: usize = self.dense.iter().map(|(w, b)| w.data().len() + b.len()).sum();
        let bn: usize = self.bn.iter().map(|(g, b)| g.len() + b.len()).sum();
        dense + bn
    }

    /// Flat, fixed-order views over all parameter slices.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in &self.dense {
            out.push(w.data());
            out.push(b.as_slice());
        }
        for (g, b) in &self.bn {
            out.push(g.as_slice());
            out.push(b.as_slice());
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (w, b) in &mut self.dense {
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        for (g, b) in &mut self.bn {
            out.push(g.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn has_non_finite(&self) -> bool {
        self.slices().iter().any(|s| s.iter().any(|v| !v.is_finite()))
    }

    /// Elementwise accumulation, used to sum gradients over path chunks.
    pub fn add_assign(&mut self, other: &ParamSet) {
        let mut mine = self.slices_mut();
        let theirs = other.slices();
        assert_eq!(mine.len(), theirs.len(), "parameter set shapes");
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }
}

/// Running batch-norm statistics, one vector pair per site.
#[derive(Debug, Clone, PartialEq)]
pub struct BnRunningStats {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct BnSiteCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

/// Everything `backward` needs from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    n: usize,
    /// Input to dense layer `k` (after input-site batch norm for `k = 0`).
    dense_inputs: Vec<Matrix>,
    /// Post-batch-norm pre-activations of the hidden layers.
    hidden_preacts: Vec<Matrix>,
    bn_sites: Vec<BnSiteCache>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// Smallest |pre-activation| seen by any hidden ReLU in this pass;
    /// infinity when there are no hidden layers. Useful to judge how far
    /// the batch sits from the activation kinks.
    pub fn hidden_kink_margin(&self) -> f64 {
        self.hidden_preacts
            .iter()
            .flat_map(|m| m.data().iter())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }
}

/// Parameter and input gradients from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    pub params: ParamSet,
    pub inputs: Matrix,
}

/// Parameter count of the dense part, `Σ_k (l_{k-1} l_k + l_k)`.
pub fn dense_param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layer_sizes: Vec<usize>,
    pub(crate) params: ParamSet,
    pub(crate) bn_stats: Option<BnRunningStats>,
    version: u64,
}

impl Network {
    /// He-initialised network: weights `N(0, 2/l_{k-1})`, zero biases,
    /// batch-norm scale 1 / shift 0 with running stats (0, 1).
    pub fn init(layer_sizes: &[usize], batchnorm: bool, stream: RandomStream) -> Result<Network> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("network needs at least input and output layers".into()));
        }
        if let Some(bad) = layer_sizes.iter().position(|&l| l < 1) {
            return Err(Error::Config(format!("layer {bad} has size 0")));
        }
        let mut sampler = stream.sampler();
        let mut dense = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let mut weights = Matrix::zeros(fan_in, fan_out);
            for v in weights.data_mut() {
                *v = std * sampler.next_normal();
            }
            dense.push((weights, vec![0.0; fan_out]));
        }
        let (bn, bn_stats) = if batchnorm {
            let site_widths = bn_site_widths(layer_sizes);
            let bn = site_widths.iter().map(|&w| (vec![1.0; w], vec![0.0; w])).collect();
            let stats = BnRunningStats {
                mean: site_widths.iter().map(|&w| vec![0.0; w]).collect(),
                var: site_widths.iter().map(|&w| vec![1.0; w]).collect(),
            };
            (bn, Some(stats))
        } else {
            (Vec::new(), None)
        };
        Ok(Network { layer_sizes: layer_sizes.to_vec(), params: ParamSet { dense, bn }, bn_stats, version: 0 })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.bn_stats.is_some()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut ParamSet {
        self.version += 1;
        &mut self.params
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.layer_sizes[0] {
            return Err(Error::Dimension {
                what: "network input",
                expected: self.layer_sizes[0],
                actual: batch.cols(),
            });
        }
        Ok(())
    }

    /// Eval-mode forward: pure, uses running statistics in batch norm.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let depth = self.params.dense.len();
        let mut x = batch.clone();
        if self.bn_stats.is_some() {
            x = self.bn_eval(0, &x);
        }
        for k in 0..depth {
            let (w, b) = &self.params.dense[k];
            let mut z = x.matmul(w);
            add_bias(&mut z, b);
            if self.bn_stats.is_some() {
                z = self.bn_eval(k + 1, &z);
            }
            if k + 1 < depth {
                relu_inplace(&mut z);
            }
            x = z;
        }
        Ok(x)
    }

    /// Train-mode forward: uses batch statistics in batch norm, updates the
    /// running statistics, and returns the cache for `backward`.
    pub fn forward_train(&mut self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        let depth = self.params.dense.len();
        let n = batch.rows();
        let mut dense_inputs = Vec::with_capacity(depth);
        let mut hidden_preacts = Vec::with_capacity(depth.saturating_sub(1));
        let mut bn_sites = Vec::new();
        let mut x = batch.clone();
        if self.bn_stats.is_some() {
            let (y, cache) = self.bn_train(0, &x);
            bn_sites.push(cache);
            x = y;
        }
        for k in 0..depth {
            dense_inputs.push(x.clone());
            let (w, b) = &self.params.dense[k];
            let mut z = x.matmul(w);
            add_bias(&mut z, b);
            if self.bn_stats.is_some() {
                let (y, cache) = self.bn_train(k + 1, &z);
                bn_sites.push(cache);
                z = y;
            }
            if k + 1 < depth {
                hidden_preacts.push(z.clone());
                relu_inplace(&mut z);
            }
            x = z;
        }
        let cache = ForwardCache {
            version: self.version,
            n,
            dense_inputs,
            hidden_preacts,
            bn_sites,
            output: x.clone(),
        };
        Ok((x, cache))
    }

    /// Exact reverse-mode gradients of the train-mode forward map.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache { cache_version: cache.version, net_version: self.version });
        }
        if upstream.rows() != cache.n || upstream.cols() != self.output_width() {
            return Err(Error::Dimension {
                what: "upstream gradient",
                expected: self.output_width(),
                actual: upstream.cols(),
            });
        }
        let depth = self.params.dense.len();
        let mut grads = self.params.zeros_like();
        let mut g = upstream.clone();
        if self.bn_stats.is_some() {
            let (dgamma, dbeta, dx) = self.bn_backward(depth, &cache.bn_sites[depth], &g);
            grads.bn[depth] = (dgamma, dbeta);
            g = dx;
        }
        for k in (0..depth).rev() {
            let x_k = &cache.dense_inputs[k];
            grads.dense[k].0 = x_k.matmul_at_b(&g);
            for (j, v) in grads.dense[k].1.iter_mut().enumerate() {
                *v = (0..g.rows()).map(|i| g[(i, j)]).sum();
            }
            let (w, _) = &self.params.dense[k];
            g = g.matmul_transpose(w);
            if k > 0 {
                // Through the ReLU (subgradient 0 at 0), then the site norm.
                let pre = &cache.hidden_preacts[k - 1];
                for (gv, pv) in g.data_mut().iter_mut().zip(pre.data()) {
                    if *pv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                if self.bn_stats.is_some() {
                    let (dgamma, dbeta, dx) = self.bn_backward(k, &cache.bn_sites[k], &g);
                    grads.bn[k] = (dgamma, dbeta);
                    g = dx;
                }
            } else if self.bn_stats.is_some() {
                let (dgamma, dbeta, dx) = self.bn_backward(0, &cache.bn_sites[0], &g);
                grads.bn[0] = (dgamma, dbeta);
                g = dx;
            }
        }
        Ok(Gradients { params: grads, inputs: g })
    }

    /// Eval-mode output together with input gradients for a given upstream,
    /// without touching running statistics or computing parameter gradients.
    pub fn eval_with_input_grad(&self, batch: &Matrix, upstream: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_input(batch)?;
        let depth = self.params.dense.len();
        let mut x = batch.clone();
        let mut hidden_preacts = Vec::with_capacity(depth.saturating_sub(1));
        if self.bn_stats.is_some() {
            x = self.bn_eval(0, &x);
        }
        for k in 0..depth {
            let (w, b) = &self.params.dense[k];
            let mut z = x.matmul(w);
            add_bias(&mut z, b);
            if self.bn_stats.is_some() {
                z = self.bn_eval(k + 1, &z);
            }
            if k + 1 < depth {
                hidden_preacts.push(z.clone());
                relu_inplace(&mut z);
            }
            x = z;
        }
        let mut g = upstream.clone();
        if self.bn_stats.is_some() {
            self.bn_eval_backward(depth, &mut g);
        }
        for k in (0..depth).rev() {
            let (w, _) = &self.params.dense[k];
            g = g.matmul_transpose(w);
            if k > 0 {
                let pre = &hidden_preacts[k - 1];
                for (gv, pv) in g.data_mut().iter_mut().zip(pre.data()) {
                    if *pv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                if self.bn_stats.is_some() {
                    self.bn_eval_backward(k, &mut g);
                }
            } else if self.bn_stats.is_some() {
                self.bn_eval_backward(0, &mut g);
            }
        }
        Ok((x, g))
    }

    fn bn_train(&mut self, site: usize, x: &Matrix) -> (Matrix, BnSiteCache) {
        let (gamma, beta) = (&self.params.bn[site].0, &self.params.bn[site].1);
        let (n, w) = (x.rows(), x.cols());
        let nf = n as f64;
        let mut mean = vec![0.0; w];
        let mut var = vec![0.0; w];
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= nf;
        }
        for i in 0..n {
            for (j, v) in x.row(i).iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= nf;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Matrix::zeros(n, w);
        let mut out = Matrix::zeros(n, w);
        for i in 0..n {
            for j in 0..w {
                let h = (x[(i, j)] - mean[j]) * inv_std[j];
                xhat[(i, j)] = h;
                out[(i, j)] = gamma[j] * h + beta[j];
            }
        }
        // Running stats keep the unbiased variance estimate.
        let stats = self.bn_stats.as_mut().expect("bn enabled");
        let unbias = if n > 1 { nf / (nf - 1.0) } else { 1.0 };
        for j in 0..w {
            stats.mean[site][j] = (1.0 - BN_MOMENTUM) * stats.mean[site][j] + BN_MOMENTUM * mean[j];
            stats.var[site][j] =
                (1.0 - BN_MOMENTUM) * stats.var[site][j] + BN_MOMENTUM * var[j] * unbias;
        }
        (out, BnSiteCache { xhat, inv_std })
    }

    fn bn_eval(&self, site: usize, x: &Matrix) -> Matrix {
        let (gamma, beta) = (&self.params.bn[site].0, &self.params.bn[site].1);
        let stats = self.bn_stats.as_ref().expect("bn enabled");
        let (n, w) = (x.rows(), x.cols());
        let mut out = Matrix::zeros(n, w);
        for j in 0..w {
            let inv = 1.0 / (stats.var[site][j] + BN_EPS).sqrt();
            let scale = gamma[j] * inv;
            let shift = beta[j] - scale * stats.mean[site][j];
            for i in 0..n {
                out[(i, j)] = scale * x[(i, j)] + shift;
            }
        }
        out
    }

    fn bn_eval_backward(&self, site: usize, g: &mut Matrix) {
        let gamma = &self.params.bn[site].0;
        let stats = self.bn_stats.as_ref().expect("bn enabled");
        for j in 0..g.cols() {
            let scale = gamma[j] / (stats.var[site][j] + BN_EPS).sqrt();
            for i in 0..g.rows() {
                g[(i, j)] *= scale;
            }
        }
    }

    fn bn_backward(
        &self,
        site: usize,
        cache: &BnSiteCache,
        dy: &Matrix,
    ) -> (Vec<f64>, Vec<f64>, Matrix) {
        let gamma = &self.params.bn[site].0;
        let (n, w) = (dy.rows(), dy.cols());
        let nf = n as f64;
        let mut dgamma = vec![0.0; w];
        let mut dbeta = vec![0.0; w];
        let mut sum_dxhat = vec![0.0; w];
        let mut sum_dxhat_xhat = vec![0.0; w];
        for i in 0..n {
            for j in 0..w {
                let dyij = dy[(i, j)];
                let xh = cache.xhat[(i, j)];
                dgamma[j] += dyij * xh;
                dbeta[j] += dyij;
                let dxh = dyij * gamma[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * xh;
            }
        }
        let mut dx = Matrix::zeros(n, w);
        for i in 0..n {
            for j in 0..w {
                let dxh = dy[(i, j)] * gamma[j];
                dx[(i, j)] = cache.inv_std[j] / nf
                    * (nf * dxh - sum_dxhat[j] - cache.xhat[(i, j)] * sum_dxhat_xhat[j]);
            }
        }
        (dgamma, dbeta, dx)
    }
}

fn bn_site_widths(layer_sizes: &[usize]) -> Vec<usize> {
    // Raw input, each hidden pre-activation, and the output of the last
    // linear map.
    let mut widths = vec![layer_sizes[0]];
    widths.extend_from_slice(&layer_sizes[1..]);
    widths
}

fn add_bias(z: &mut Matrix, bias: &[f64]) {
    for i in 0..z.rows() {
        for (v, b) in z.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn relu_inplace(z: &mut Matrix) {
    for v in z.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize, c: usize) -> Matrix {
        Matrix::from_vec(n, c, vec![1.0; n * c])
    }

    #[test]
    fn parameter_count_formula() {
        let net = Network::init(&[2, 22, 22, 1], false, RandomStream::new(0)).unwrap();
        assert_eq!(net.param_count(), 595);
        assert_eq!(dense_param_count(&[2, 22, 22, 1]), 595);
        let with_bn = Network::init(&[2, 22, 22, 1], true, RandomStream::new(0)).unwrap();
        assert_eq!(with_bn.param_count(), 595 + 2 * (2 + 22 + 22 + 1));
    }

    #[test]
    fn output_width_matches_gradient_head() {
        let net = Network::init(&[2, 22, 22, 2], false, RandomStream::new(0)).unwrap();
        assert_eq!(net.output_width(), 2);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::init(&[3, 8, 1], true, RandomStream::new(7)).unwrap();
        let b = Network::init(&[3, 8, 1], true, RandomStream::new(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(Network::init(&[4], false, RandomStream::new(0)).is_err());
        assert!(Network::init(&[4, 0, 1], false, RandomStream::new(0)).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Network::init(&[3, 5, 2], false, RandomStream::new(1)).unwrap();
        for s in net.params_mut().slices_mut() {
            s.fill(0.0);
        }
        let out = net.forward_eval(&ones(4, 3)).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_sums_inputs() {
        let mut net = Network::init(&[2, 1], false, RandomStream::new(1)).unwrap();
        net.params_mut().dense[0].0 = Matrix::from_vec(2, 1, vec![1.0, 1.0]);
        net.params_mut().dense[0].1 = vec![0.0];
        let x = Matrix::from_rows(&[vec![2.0, 3.0], vec![-1.0, 4.0]]);
        let out = net.forward_eval(&x).unwrap();
        assert_eq!(out.data(), &[5.0, 3.0]);
    }

    #[test]
    fn hand_computed_two_layer_relu() {
        // x -> relu(x W1 + b1) W2 + b2 with W1 = [[1, -1], [2, 0]],
        // b1 = (0.5, -0.5), W2 = [(1), (-2)], b2 = 0.25.
        let mut net = Network::init(&[2, 2, 1], false, RandomStream::new(1)).unwrap();
        net.params_mut().dense[0].0 = Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.0]]);
        net.params_mut().dense[0].1 = vec![0.5, -0.5];
        net.params_mut().dense[1].0 = Matrix::from_vec(2, 1, vec![1.0, -2.0]);
        net.params_mut().dense[1].1 = vec![0.25];
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]);
        // z1 = (1*1 + 2*2 + 0.5, 1*(-1) + 0 - 0.5) = (5.5, -1.5)
        // relu = (5.5, 0) -> out = 5.5 * 1 + 0 * (-2) + 0.25 = 5.75
        let out = net.forward_eval(&x).unwrap();
        assert!((out[(0, 0)] - 5.75).abs() < 1e-12);
    }

    #[test]
    fn train_and_eval_agree_without_batchnorm() {
        let mut net = Network::init(&[3, 6, 2], false, RandomStream::new(3)).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.4, 2.0], vec![1.0, 0.3, -0.2]]);
        let eval = net.forward_eval(&x).unwrap();
        let (train, _) = net.forward_train(&x).unwrap();
        assert_eq!(eval, train);
    }

    #[test]
    fn eval_mode_is_pure() {
        let net = Network::init(&[2, 8, 1], true, RandomStream::new(5)).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, 1.2], vec![-0.7, 0.4]]);
        let a = net.forward_eval(&x).unwrap();
        let b = net.forward_eval(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let net = Network::init(&[3, 4, 1], false, RandomStream::new(0)).unwrap();
        assert!(net.forward_eval(&ones(2, 2)).is_err());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = Network::init(&[2, 4, 1], false, RandomStream::new(0)).unwrap();
        let x = ones(3, 2);
        let (_, cache) = net.forward_train(&x).unwrap();
        net.params_mut(); // bump version
        let up = ones(3, 1);
        match net.backward(&cache, &up) {
            Err(Error::StaleCache { .. }) => {}
            other => panic!("expected stale cache error, got {other:?}"),
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = Network::init(&[2, 4, 2], true, RandomStream::new(2)).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, -0.3], vec![1.4, 0.9], vec![-0.5, 0.1]]);
        let (_, cache) = net.forward_train(&x).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(3, 2)).unwrap();
        assert!(g.params.slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));
        assert!(g.inputs.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_input_gradient_is_w_transpose_times_upstream() {
        let mut net = Network::init(&[3, 2], false, RandomStream::new(4)).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]);
        let (_, cache) = net.forward_train(&x).unwrap();
        let up = Matrix::from_rows(&[vec![1.5, -0.5]]);
        let g = net.backward(&cache, &up).unwrap();
        let w = &net.params().dense[0].0;
        for j in 0..3 {
            let want = w[(j, 0)] * 1.5 + w[(j, 1)] * (-0.5);
            assert!((g.inputs[(0, j)] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn batchnorm_normalizes_training_batches() {
        let mut net = Network::init(&[2, 4, 1], true, RandomStream::new(6)).unwrap();
        net.params_mut().bn[0] = (vec![1.5, 0.5], vec![0.2, -0.3]);
        // Large-variance input so the eps inside the normalization is
        // negligible relative to the batch variance.
        let n = 256;
        let mut sampler = RandomStream::new(9).sampler();
        let mut x = Matrix::zeros(n, 2);
        for v in x.data_mut() {
            *v = 100.0 * sampler.next_normal();
        }
        let (_, cache) = net.forward_train(&x).unwrap();
        // Recover the site-0 output from the cache: gamma * xhat + beta.
        let (gamma, beta) = net.params().bn[0].clone();
        for j in 0..2 {
            let col: Vec<f64> = (0..n)
                .map(|i| gamma[j] * cache.bn_sites[0].xhat[(i, j)] + beta[j])
                .collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            assert!((mean - beta[j]).abs() < 1e-6 * (1.0 + beta[j].abs()), "mean {mean}");
            assert!(
                (var / (gamma[j] * gamma[j]) - 1.0).abs() < 1e-6,
                "var {var} gamma {}",
                gamma[j]
            );
        }
    }

    #[test]
    fn eval_input_grad_matches_train_backward_on_bn_free_net() {
        let mut net = Network::init(&[3, 7, 2], false, RandomStream::new(8)).unwrap();
        let x = Matrix::from_rows(&[vec![0.4, -0.2, 1.1], vec![2.0, 0.3, -0.9]]);
        let up = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25]]);
        let (out_eval, gin) = net.eval_with_input_grad(&x, &up).unwrap();
        let (out_train, cache) = net.forward_train(&x).unwrap();
        let g = net.backward(&cache, &up).unwrap();
        assert_eq!(out_eval, out_train);
        for (a, b) in gin.data().iter().zip(g.inputs.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
