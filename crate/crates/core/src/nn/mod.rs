//! Feed-forward ReLU networks trained with mean squared error plus a
//! per-layer ℓ1 penalty, followed by one-shot magnitude pruning.

mod model;
mod prune;
mod train;

pub use model::{DenseLayer, MlpModel};
pub use prune::{prune, sparsity_report, LayerSparsity, SparsityReport};
pub use train::{
    dataset_cost, loss_and_gradients, train, Gradients, LossBreakdown, Optimizer, TrainConfig,
    TrainOutcome,
};

/// Default dense architecture: 13 inputs, three hidden layers, 8 outputs.
pub const DEFAULT_SHAPE: [usize; 5] = [13, 15, 14, 12, 8];

/// ℓ1 coefficient applied to every layer of sparse models unless configured.
pub const DEFAULT_SPARSE_LAMBDA: f64 = 2.5e-2;

/// Magnitude below which weights are removed after training.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-3;
