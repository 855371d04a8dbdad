mod common;

use cellsysid::nn::loss_and_gradients;
use common::{max_relative_error, random_case};

#[test]
fn backprop_matches_central_differences() {
    let worst = (0..20).map(max_relative_error).fold(0.0, f64::max);
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn masked_weights_get_no_gradient() {
    let mut c = random_case(99);
    c.model.layers_mut()[0].mask_out(0, 0);
    let batch: Vec<(&[f64], &[f64])> = c.xs.iter().zip(&c.ys).map(|(x, y)| (&x[..], &y[..])).collect();
    let (_, g) = loss_and_gradients(&c.model, &batch, &c.lambdas).unwrap();
    assert_eq!(g.weights[0][0], 0.0);
}
