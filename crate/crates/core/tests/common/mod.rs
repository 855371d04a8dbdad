//! Helpers shared by integration test targets.

use cellsysid::nn::{loss_and_gradients, MlpModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub model: MlpModel<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut shape = vec![rng.gen_range(2..=6)];
    for _ in 0..depth {
        shape.push(rng.gen_range(2..=7));
    }
    shape.push(rng.gen_range(1..=4));
    let mut model = MlpModel::<f64>::init(&shape, seed).unwrap();
    for layer in model.layers_mut() {
        for b in layer.biases_mut() {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    let n = rng.gen_range(1..=6);
    let xs = (0..n)
        .map(|_| (0..shape[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let ys = (0..n)
        .map(|_| (0..shape[shape.len() - 1]).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let lambdas = (0..shape.len() - 1).map(|_| rng.gen_range(0.0..0.05)).collect();
    Case { model, xs, ys, lambdas }
}

fn cost(c: &Case, model: &MlpModel<f64>) -> f64 {
    let batch: Vec<(&[f64], &[f64])> = c.xs.iter().zip(&c.ys).map(|(x, y)| (&x[..], &y[..])).collect();
    loss_and_gradients(model, &batch, &c.lambdas).unwrap().0.total
}

/// Largest relative deviation between backpropagated and central-difference
/// gradients over all parameters of one network.
pub fn max_relative_error(seed: u64) -> f64 {
    let c = random_case(seed);
    let batch: Vec<(&[f64], &[f64])> = c.xs.iter().zip(&c.ys).map(|(x, y)| (&x[..], &y[..])).collect();
    let (_, grads) = loss_and_gradients(&c.model, &batch, &c.lambdas).unwrap();
    let h = 1e-6;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
    let mut worst = 0.0f64;
    for j in 0..c.model.layers().len() {
        for k in 0..c.model.layers()[j].weights().len() {
            let mut plus = c.model.clone();
            let mut minus = c.model.clone();
            plus.layers_mut()[j].weights_mut()[k] += h;
            minus.layers_mut()[j].weights_mut()[k] -= h;
            let fd = (cost(&c, &plus) - cost(&c, &minus)) / (2.0 * h);
            worst = worst.max(rel(grads.weights[j][k], fd));
        }
        for k in 0..c.model.layers()[j].biases().len() {
            let mut plus = c.model.clone();
            let mut minus = c.model.clone();
            plus.layers_mut()[j].biases_mut()[k] += h;
            minus.layers_mut()[j].biases_mut()[k] -= h;
            let fd = (cost(&c, &plus) - cost(&c, &minus)) / (2.0 * h);
            worst = worst.max(rel(grads.biases[j][k], fd));
        }
    }
    worst
}
