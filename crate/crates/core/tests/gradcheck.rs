//! Reverse-mode gradients against central finite differences across random
//! architectures, with and without batch normalization.

mod common;

#[test]
fn gradients_match_finite_differences_across_architectures() {
    let mut total = 0usize;
    let mut worst: f64 = 0.0;
    for idx in 0..30 {
        let report = common::check_random_architecture(idx, 1e-5);
        total += report.checked;
        worst = worst.max(report.max_rel_err);
    }
    assert!(total > 1_000, "checked only {total} gradients");
    assert!(worst <= 1e-5, "worst relative error {worst}");
}
