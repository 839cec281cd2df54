//! Shared helpers for integration tests: finite-difference gradient oracles
//! and simple sample statistics. Everything here is independent of the
//! reverse-mode implementation it is used to check.

#![allow(dead_code)]

use martcv::math::{Matrix, NormalSampler, RandomStream};
use martcv::nn::Network;

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Scalar probe loss `Σ c_ij out_ij` evaluated through a train-mode
/// forward pass.
fn probe_loss(net: &mut Network, batch: &Matrix, coeffs: &Matrix) -> f64 {
    let (out, _) = net.forward_train(batch).unwrap();
    out.data().iter().zip(coeffs.data()).map(|(o, c)| o * c).sum()
}

fn random_matrix(rows: usize, cols: usize, scale: f64, sampler: &mut NormalSampler) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = scale * sampler.next_normal();
    }
    m
}

/// Result of one finite-difference comparison.
pub struct FdReport {
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Compare reverse-mode parameter and input gradients against central
/// finite differences with step `h`. Panics with context on mismatch.
pub fn finite_difference_check(
    net: &mut Network,
    batch: &Matrix,
    coeffs: &Matrix,
    h: f64,
    tol: f64,
) -> FdReport {
    let (_, cache) = net.forward_train(batch).unwrap();
    let grads = net.backward(&cache, coeffs).unwrap();

    let mut checked = 0usize;
    let mut max_rel: f64 = 0.0;
    let mut compare = |ad: f64, fd: f64, what: &str| {
        let err = (ad - fd).abs();
        if err > 1e-8 {
            let rel = err / ad.abs().max(fd.abs()).max(1e-12);
            assert!(rel <= tol, "{what}: reverse-mode {ad} vs finite-difference {fd} (rel {rel})");
            if rel > max_rel {
                max_rel = rel;
            }
        }
        checked += 1;
    };

    // Parameters, one at a time through the flat views.
    let n_slices = net.params().slices().len();
    for s in 0..n_slices {
        let len = net.params().slices()[s].len();
        for i in 0..len {
            let orig = net.params().slices()[s][i];
            net.params_mut().slices_mut()[s][i] = orig + h;
            let up = probe_loss(net, batch, coeffs);
            net.params_mut().slices_mut()[s][i] = orig - h;
            let down = probe_loss(net, batch, coeffs);
            net.params_mut().slices_mut()[s][i] = orig;
            let fd = (up - down) / (2.0 * h);
            compare(grads.params.slices()[s][i], fd, &format!("param slice {s} index {i}"));
        }
    }

    // Inputs.
    let mut perturbed = batch.clone();
    for r in 0..batch.rows() {
        for c in 0..batch.cols() {
            let orig = batch[(r, c)];
            perturbed[(r, c)] = orig + h;
            let up = probe_loss(net, &perturbed, coeffs);
            perturbed[(r, c)] = orig - h;
            let down = probe_loss(net, &perturbed, coeffs);
            perturbed[(r, c)] = orig;
            let fd = (up - down) / (2.0 * h);
            compare(grads.inputs[(r, c)], fd, &format!("input ({r},{c})"));
        }
    }
    FdReport { checked, max_rel_err: max_rel }
}

/// Build a random architecture + batch that keeps all hidden
/// pre-activations away from the ReLU kink, then finite-difference check
/// every gradient at relative tolerance `tol`.
pub fn check_random_architecture(config_index: u64, tol: f64) -> FdReport {
    let stream = RandomStream::new(0xFD00).substream(config_index);
    let mut sampler = stream.sampler();
    let n_hidden = 1 + (sampler.next_uniform() * 3.0) as usize; // 1..=3
    let mut sizes = Vec::with_capacity(n_hidden + 2);
    sizes.push(1 + (sampler.next_uniform() * 4.0) as usize);
    for _ in 0..n_hidden {
        sizes.push(2 + (sampler.next_uniform() * 5.0) as usize);
    }
    sizes.push(1 + (sampler.next_uniform() * 3.0) as usize);
    let batchnorm = sampler.next_uniform() < 0.4;
    let rows = 3 + (sampler.next_uniform() * 3.0) as usize;

    // Finite differences are meaningless across the kink, so resample until
    // all pre-activations keep a margin much larger than the step.
    for attempt in 0..200u64 {
        let mut net = Network::init(&sizes, batchnorm, stream.substream(1 + attempt)).unwrap();
        let mut s2 = stream.substream(10_000 + attempt).sampler();
        let batch = random_matrix(rows, sizes[0], 1.3, &mut s2);
        let coeffs = random_matrix(rows, *sizes.last().unwrap(), 1.0, &mut s2);
        let (_, cache) = net.forward_train(&batch).unwrap();
        if cache.hidden_kink_margin() < 2e-3 {
            continue;
        }
        return finite_difference_check(&mut net, &batch, &coeffs, 1e-5, tol);
    }
    panic!("no kink-safe configuration found for index {config_index}");
}
