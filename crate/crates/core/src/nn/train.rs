//! Cost, backpropagation and mini-batch optimization.
//!
//! The cost of a batch of `N` pairs is
//! `(1/N) Σ_i ||y_i - f(x_i)||² + Σ_j λ_j ||W_j||_1`;
//! biases are not penalized.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{relu, MlpModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainConfig<T> {
    /// ℓ1 coefficient per weight matrix.
    pub lambdas: Vec<T>,
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    /// Magnitude below which weights are pruned after training.
    pub prune_threshold: T,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl<T: Scalar> TrainConfig<T> {
    /// Unregularized configuration for a network with `layers` weight matrices.
    pub fn dense(layers: usize, seed: u64) -> Self {
        Self {
            lambdas: vec![T::zero(); layers],
            learning_rate: T::lit(1e-3),
            epochs: 500,
            batch_size: 128,
            prune_threshold: T::lit(super::DEFAULT_PRUNE_THRESHOLD),
            seed,
            optimizer: Optimizer::default(),
        }
    }

    /// Same λ on every weight matrix.
    pub fn sparse(layers: usize, lambda: T, seed: u64) -> Self {
        Self {
            lambdas: vec![lambda; layers],
            ..Self::dense(layers, seed)
        }
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.lambdas.len() != layers {
            return Err(Error::Config(format!(
                "{} lambdas given for {layers} weight matrices",
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|l| !(*l >= T::zero())) {
            return Err(Error::Config("lambdas must be non-negative".into()));
        }
        if !(self.prune_threshold >= T::zero()) {
            return Err(Error::Config("prune threshold must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown<T> {
    pub mse: T,
    /// Unweighted `||W_j||_1` per layer.
    pub l1: Vec<T>,
    /// `Σ_j λ_j ||W_j||_1`.
    pub penalty: T,
    pub total: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            weights: model.layers().iter().map(|l| vec![T::zero(); l.weights().len()]).collect(),
            biases: model.layers().iter().map(|l| vec![T::zero(); l.rows()]).collect(),
        }
    }
}

fn sign<T: Scalar>(w: T) -> T {
    if w > T::zero() {
        T::one()
    } else if w < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn penalty<T: Scalar>(model: &MlpModel<T>, lambdas: &[T]) -> (Vec<T>, T) {
    let l1: Vec<T> = model.layers().iter().map(|l| l.l1_norm()).collect();
    let p = l1.iter().zip(lambdas).map(|(n, l)| *n * *l).sum();
    (l1, p)
}

/// Batch cost and its (sub)gradient with respect to every parameter.
///
/// The ℓ1 subgradient uses `sign(0) = 0`; masked weights get zero gradient.
pub fn loss_and_gradients<T: Scalar>(
    model: &MlpModel<T>,
    batch: &[(&[T], &[T])],
    lambdas: &[T],
) -> Result<(LossBreakdown<T>, Gradients<T>)> {
    let layers = model.layers();
    if lambdas.len() != layers.len() {
        return Err(Error::DimensionMismatch {
            expected: layers.len(),
            got: lambdas.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let shape = model.shape();
    let n_out = model.output_dim();
    let scale = T::lit(2.0) / T::lit(batch.len() as f64);

    let mut grads = Gradients::zeros_like(model);
    // acts[j] = input of layer j (post-ReLU), pre[j] = layer j pre-activation.
    let mut acts: Vec<Vec<T>> = shape[..shape.len() - 1].iter().map(|&d| vec![T::zero(); d]).collect();
    let mut pre: Vec<Vec<T>> = shape[1..].iter().map(|&d| vec![T::zero(); d]).collect();
    let max_width = shape.iter().copied().max().unwrap_or(0);
    let mut delta = vec![T::zero(); max_width];
    let mut delta_prev = vec![T::zero(); max_width];
    let mut sse = T::zero();

    for (x, y) in batch {
        if x.len() != shape[0] || y.len() != n_out {
            return Err(Error::DimensionMismatch {
                expected: shape[0] + n_out,
                got: x.len() + y.len(),
            });
        }
        acts[0].copy_from_slice(x);
        for j in 0..layers.len() {
            layers[j].affine(&acts[j], &mut pre[j]);
            if j + 1 < layers.len() {
                for (a, z) in acts[j + 1].iter_mut().zip(&pre[j]) {
                    *a = relu(*z);
                }
            }
        }
        let out = &pre[layers.len() - 1];
        for k in 0..n_out {
            let e = out[k] - y[k];
            sse += e * e;
            delta[k] = scale * e;
        }
        for j in (0..layers.len()).rev() {
            let l = &layers[j];
            let (rows, cols) = (l.rows(), l.cols());
            let gw = &mut grads.weights[j];
            let a = &acts[j];
            for r in 0..rows {
                let d = delta[r];
                if d == T::zero() {
                    continue;
                }
                grads.biases[j][r] += d;
                let g = &mut gw[r * cols..(r + 1) * cols];
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += d * *ai;
                }
            }
            if j > 0 {
                let w = l.weights();
                delta_prev[..cols].iter_mut().for_each(|v| *v = T::zero());
                for r in 0..rows {
                    let d = delta[r];
                    if d == T::zero() {
                        continue;
                    }
                    for (dp, wi) in delta_prev[..cols].iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                        *dp += d * *wi;
                    }
                }
                for (c, dp) in delta_prev[..cols].iter_mut().enumerate() {
                    if pre[j - 1][c] <= T::zero() {
                        *dp = T::zero();
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }

    for (j, l) in layers.iter().enumerate() {
        let lambda = lambdas[j];
        for ((g, w), m) in grads.weights[j].iter_mut().zip(l.weights()).zip(l.mask()) {
            if *m {
                *g += lambda * sign(*w);
            } else {
                *g = T::zero();
            }
        }
    }

    let mse = sse / T::lit(batch.len() as f64);
    let (l1, pen) = penalty(model, lambdas);
    Ok((
        LossBreakdown {
            mse,
            l1,
            penalty: pen,
            total: mse + pen,
        },
        grads,
    ))
}

/// Full-data cost without gradients.
pub fn dataset_cost<T: Scalar>(
    model: &MlpModel<T>,
    inputs: &[Vec<T>],
    targets: &[Vec<T>],
    lambdas: &[T],
) -> Result<LossBreakdown<T>> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::InvalidArgument("inputs and targets must be non-empty and aligned".into()));
    }
    let mut sse = T::zero();
    for (x, y) in inputs.iter().zip(targets) {
        let out = model.forward(x)?;
        sse += out.iter().zip(y).map(|(o, t)| (*o - *t) * (*o - *t)).sum::<T>();
    }
    let mse = sse / T::lit(inputs.len() as f64);
    let (l1, pen) = penalty(model, lambdas);
    Ok(LossBreakdown {
        mse,
        l1,
        penalty: pen,
        total: mse + pen,
    })
}

struct OptimizerState<T> {
    kind: Optimizer,
    lr: T,
    step: i32,
    m_w: Vec<Vec<T>>,
    v_w: Vec<Vec<T>>,
    m_b: Vec<Vec<T>>,
    v_b: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    fn new(kind: Optimizer, lr: T, model: &MlpModel<T>) -> Self {
        let z = Gradients::zeros_like(model);
        Self {
            kind,
            lr,
            step: 0,
            m_w: z.weights.clone(),
            v_w: z.weights,
            m_b: z.biases.clone(),
            v_b: z.biases,
        }
    }

    fn apply(&mut self, model: &mut MlpModel<T>, g: &Gradients<T>) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (j, layer) in model.layers_mut().iter_mut().enumerate() {
                    let mask = layer.mask.clone();
                    for ((w, gw), m) in layer.weights.iter_mut().zip(&g.weights[j]).zip(&mask) {
                        if *m {
                            *w -= self.lr * *gw;
                        }
                    }
                    for (b, gb) in layer.biases.iter_mut().zip(&g.biases[j]) {
                        *b -= self.lr * *gb;
                    }
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(epsilon));
                let c1 = T::one() - b1.powi(self.step);
                let c2 = T::one() - b2.powi(self.step);
                let lr = self.lr;
                let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                };
                for (j, layer) in model.layers_mut().iter_mut().enumerate() {
                    for i in 0..layer.weights.len() {
                        if layer.mask[i] {
                            update(&mut layer.weights[i], g.weights[j][i], &mut self.m_w[j][i], &mut self.v_w[j][i]);
                        }
                    }
                    for i in 0..layer.biases.len() {
                        update(&mut layer.biases[i], g.biases[j][i], &mut self.m_b[j][i], &mut self.v_b[j][i]);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub model: MlpModel<T>,
    /// Mean batch cost of each epoch.
    pub history: Vec<T>,
}

/// Mini-batch training on already normalized data.
///
/// Batches are drawn from a per-epoch shuffle seeded by `config.seed`; runs
/// with equal inputs are bit-for-bit identical.
pub fn train<T: Scalar>(
    model: MlpModel<T>,
    inputs: &[Vec<T>],
    targets: &[Vec<T>],
    config: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    let mut model = model;
    config.validate(model.layers().len())?;
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let mut history = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome { model, history });
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, &model);
    let mut batch: Vec<(&[T], &[T])> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = T::zero();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (inputs[i].as_slice(), targets[i].as_slice())));
            let (loss, grads) = loss_and_gradients(&model, &batch, &config.lambdas)?;
            if !loss.total.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            weighted += loss.total * T::lit(chunk.len() as f64);
            opt.apply(&mut model, &grads);
        }
        history.push(weighted / T::lit(inputs.len() as f64));
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;
    use rand::Rng;

    fn random_data(n: usize, d_in: usize, d_out: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..n).map(|_| (0..d_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys = (0..n).map(|_| (0..d_out).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        (xs, ys)
    }

    fn as_batch<'a>(xs: &'a [Vec<f64>], ys: &'a [Vec<f64>]) -> Vec<(&'a [f64], &'a [f64])> {
        xs.iter().zip(ys).map(|(x, y)| (x.as_slice(), y.as_slice())).collect()
    }

    #[test]
    fn perfect_fit_has_zero_cost_and_gradient() {
        let m = MlpModel::<f64>::init(&[4, 6, 3], 2).unwrap();
        let (xs, _) = random_data(10, 4, 3, 1);
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| m.forward(x).unwrap()).collect();
        let (loss, g) = loss_and_gradients(&m, &as_batch(&xs, &ys), &[0.0, 0.0]).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(g.weights.iter().flatten().chain(g.biases.iter().flatten()).all(|v| *v == 0.0));
    }

    #[test]
    fn l1_term_of_hand_matrix() {
        let layer = DenseLayer::from_rows(&[vec![1.0, -2.0], vec![0.0, 3.0]], vec![0.0, 0.0]).unwrap();
        let m = MlpModel::from_layers(vec![layer]).unwrap();
        let x = [0.0, 0.0];
        let y = [0.0, 0.0];
        let (loss, g) = loss_and_gradients(&m, &[(&x[..], &y[..])], &[1.0]).unwrap();
        assert_eq!(loss.mse, 0.0);
        assert_eq!(loss.penalty, 6.0);
        assert_eq!(loss.total, 6.0);
        assert_eq!(g.weights[0], vec![1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn cost_decomposes_exactly() {
        let m = MlpModel::<f64>::init(&[5, 7, 4], 9).unwrap();
        let (xs, ys) = random_data(16, 5, 4, 2);
        let lambdas = [0.01, 0.2];
        let (loss, _) = loss_and_gradients(&m, &as_batch(&xs, &ys), &lambdas).unwrap();
        let expected_pen = lambdas[0] * m.layers()[0].l1_norm() + lambdas[1] * m.layers()[1].l1_norm();
        assert_eq!(loss.penalty, expected_pen);
        assert_eq!(loss.total, loss.mse + expected_pen);
        let full = dataset_cost(&m, &xs, &ys, &lambdas).unwrap();
        assert!((full.mse - loss.mse).abs() < 1e-12);
    }

    #[test]
    fn masked_weights_get_no_gradient_and_stay_zero() {
        let mut m = MlpModel::<f64>::init(&[3, 5, 2], 4).unwrap();
        m.layers_mut()[0].mask_out(2, 1);
        m.layers_mut()[1].mask_out(0, 4);
        let (xs, ys) = random_data(64, 3, 2, 5);
        let (_, g) = loss_and_gradients(&m, &as_batch(&xs, &ys), &[0.1, 0.1]).unwrap();
        assert_eq!(g.weights[0][2 * 3 + 1], 0.0);
        assert_eq!(g.weights[1][4], 0.0);
        for opt in [Optimizer::Sgd, Optimizer::default()] {
            let cfg = TrainConfig {
                epochs: 20,
                batch_size: 8,
                optimizer: opt,
                ..TrainConfig::sparse(2, 0.01, 3)
            };
            let out = train(m.clone(), &xs, &ys, &cfg).unwrap();
            assert_eq!(out.model.layers()[0].weight(2, 1), 0.0);
            assert_eq!(out.model.layers()[1].weight(0, 4), 0.0);
        }
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let m = MlpModel::<f64>::init(&[3, 4, 2], 1).unwrap();
        let (xs, ys) = random_data(10, 3, 2, 0);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::dense(2, 0)
        };
        let out = train(m.clone(), &xs, &ys, &cfg).unwrap();
        assert_eq!(out.model, m);
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = random_data(200, 3, 2, 7);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            ..TrainConfig::sparse(2, 1e-3, 11)
        };
        let a = train(MlpModel::init(&[3, 6, 2], 1).unwrap(), &xs, &ys, &cfg).unwrap();
        let b = train(MlpModel::init(&[3, 6, 2], 1).unwrap(), &xs, &ys, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn invalid_config_rejected() {
        let m = MlpModel::<f64>::init(&[3, 4, 2], 1).unwrap();
        let (xs, ys) = random_data(10, 3, 2, 0);
        let mut cfg = TrainConfig::dense(2, 0);
        cfg.batch_size = 0;
        assert!(train(m.clone(), &xs, &ys, &cfg).is_err());
        let mut cfg = TrainConfig::dense(2, 0);
        cfg.lambdas = vec![0.1, -0.1];
        assert!(train(m.clone(), &xs, &ys, &cfg).is_err());
        let cfg = TrainConfig::dense(3, 0);
        assert!(train(m, &xs, &ys, &cfg).is_err());
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let m = MlpModel::<f64>::init(&[3, 4, 2], 1).unwrap();
        let (xs, ys) = random_data(64, 3, 2, 0);
        let cfg = TrainConfig {
            learning_rate: 1e200,
            optimizer: Optimizer::Sgd,
            epochs: 50,
            batch_size: 8,
            ..TrainConfig::dense(2, 0)
        };
        assert!(matches!(train(m, &xs, &ys, &cfg), Err(Error::TrainingDiverged { .. })));
    }
}
