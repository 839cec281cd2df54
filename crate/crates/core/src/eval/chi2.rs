//! χ² confidence interval for the variance of replicated estimators.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided `1 - alpha` confidence interval
/// `[(N-1) S² / χ²_{1-α/2, N-1}, (N-1) S² / χ²_{α/2, N-1}]`
/// for the variance underlying the replicated estimator samples.
pub fn variance_chi2_ci(estimator_samples: &[f64], alpha: f64) -> (f64, f64) {
    let n = estimator_samples.len();
    assert!(n >= 2, "need at least two replications");
    let mean = estimator_samples.iter().sum::<f64>() / n as f64;
    let s2 = estimator_samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
        / (n as f64 - 1.0);
    let spread = estimator_samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    if s2 == 0.0 || spread.0 == spread.1 {
        return (0.0, 0.0);
    }
    let dof = (n - 1) as f64;
    let chi = ChiSquared::new(dof).expect("positive dof");
    let hi_q = chi.inverse_cdf(1.0 - alpha / 2.0);
    let lo_q = chi.inverse_cdf(alpha / 2.0);
    (dof * s2 / hi_q, dof * s2 / lo_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RandomStream;

    #[test]
    fn nine_dof_quantile_arithmetic() {
        // Unit sample variance via a synthetic sample: scale any sample to
        // S² = 1 and check against the 9-dof quantiles 2.7004 and 19.0228.
        let raw = RandomStream::new(4).standard_normals(10);
        let mean = raw.iter().sum::<f64>() / 10.0;
        let s2 = raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 9.0;
        let scaled: Vec<f64> = raw.iter().map(|x| x / s2.sqrt()).collect();
        let (lo, hi) = variance_chi2_ci(&scaled, 0.05);
        assert!((lo - 9.0 / 19.0228).abs() < 1e-3, "lo {lo}");
        assert!((hi - 9.0 / 2.7004).abs() < 1e-3, "hi {hi}");
    }

    #[test]
    fn identical_samples_collapse() {
        assert_eq!(variance_chi2_ci(&[0.7; 10], 0.05), (0.0, 0.0));
    }

    #[test]
    fn coverage_on_gaussian_replicates() {
        // 10^4 trials of N = 10 standard normal replicates: the 95% CI
        // should contain the true variance 1 in 95% ± 2% of trials.
        let trials = 10_000;
        let mut hits = 0;
        for t in 0..trials {
            let xs = RandomStream::new(0xC0FFEE).substream(t).standard_normals(10);
            let (lo, hi) = variance_chi2_ci(&xs, 0.05);
            if lo <= 1.0 && 1.0 <= hi {
                hits += 1;
            }
        }
        let coverage = hits as f64 / trials as f64;
        assert!((coverage - 0.95).abs() < 0.02, "coverage {coverage}");
    }
}
