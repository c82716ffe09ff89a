//! Analytic gradients against central finite differences.

mod common;

use common::{gradcheck_setup, worst_relative_error};
use motionmask::model::backward;

#[test]
fn gradients_match_finite_differences_with_fusion() {
    for seed in 0..3 {
        let (model, ex, cfg) = gradcheck_setup(0.4, seed);
        let (worst, at) = worst_relative_error(&model, &ex, &cfg);
        assert!(worst < 1e-4, "seed {seed}: relative error {worst:e} at {at}");
    }
}

#[test]
fn gradients_match_finite_differences_without_fusion() {
    let (model, ex, cfg) = gradcheck_setup(0.0, 11);
    let (worst, at) = worst_relative_error(&model, &ex, &cfg);
    assert!(worst < 1e-4, "relative error {worst:e} at {at}");
}

#[test]
fn unused_mask_row_has_zero_gradient() {
    let (model, mut ex, cfg) = gradcheck_setup(0.2, 4);
    ex.corrupted.tokens = ex.targets.iter().map(|&t| Some(t)).collect();
    let (_, grads) = backward(&model, &ex, &cfg).unwrap();
    let mask_row = model.shape.mask_row();
    assert!(grads.tok_emb.row(mask_row).iter().all(|&g| g == 0.0));
}
