//! One-shot magnitude pruning and sparsity accounting.

use serde::{Deserialize, Serialize};

use super::model::MlpModel;
use crate::scalar::Scalar;
use crate::sim::{FEATURE_DIM, FEATURE_NAMES};

/// Zeroes and masks every weight with `|w| < threshold`, then zeroes the
/// bias of each hidden neuron left without any active incoming or outgoing
/// weight. Idempotent; a zero threshold leaves the model unchanged.
pub fn prune<T: Scalar>(model: &MlpModel<T>, threshold: T) -> MlpModel<T> {
    let mut out = model.clone();
    if threshold <= T::zero() {
        return out;
    }
    for layer in out.layers_mut() {
        for r in 0..layer.rows() {
            for c in 0..layer.cols() {
                if layer.weight(r, c).abs() < threshold {
                    layer.mask_out(r, c);
                }
            }
        }
    }
    let n = out.layers().len();
    for j in 0..n - 1 {
        let isolated: Vec<usize> = (0..out.layers()[j].rows())
            .filter(|&h| !has_incoming(&out, j, h) && !has_outgoing(&out, j, h))
            .collect();
        for h in isolated {
            out.layers_mut()[j].biases_mut()[h] = T::zero();
        }
    }
    out
}

// Neuron `h` is an output row of weight matrix `j`.
fn has_incoming<T: Scalar>(m: &MlpModel<T>, j: usize, h: usize) -> bool {
    let l = &m.layers()[j];
    (0..l.cols()).any(|c| l.is_active(h, c))
}

fn has_outgoing<T: Scalar>(m: &MlpModel<T>, j: usize, h: usize) -> bool {
    let next = &m.layers()[j + 1];
    (0..next.rows()).any(|r| next.is_active(r, h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    /// 1-based hidden layer index.
    pub layer: usize,
    pub neurons: usize,
    /// Neurons whose incoming row or outgoing column is entirely zero.
    pub pruned_neurons: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub total_weights: usize,
    pub nonzero_weights: usize,
    pub pruned_fraction: f64,
    pub hidden_neurons: usize,
    pub pruned_neurons: usize,
    pub layers: Vec<LayerSparsity>,
    /// Names of the input features reaching each output.
    pub features_per_output: Vec<Vec<String>>,
}

pub fn sparsity_report<T: Scalar>(model: &MlpModel<T>) -> SparsityReport {
    let total = model.num_weights();
    let nonzero = model.num_active_weights();
    let n = model.layers().len();
    let layers: Vec<LayerSparsity> = (0..n - 1)
        .map(|j| {
            let neurons = model.layers()[j].rows();
            let pruned_neurons = (0..neurons)
                .filter(|&h| !has_incoming(model, j, h) || !has_outgoing(model, j, h))
                .collect();
            LayerSparsity {
                layer: j + 1,
                neurons,
                pruned_neurons,
            }
        })
        .collect();
    let presence = crate::analysis::reachability(model);
    let names: Vec<String> = if model.input_dim() == FEATURE_DIM {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=model.input_dim()).map(|i| format!("in{i}")).collect()
    };
    let features_per_output = (0..model.output_dim())
        .map(|o| {
            (0..model.input_dim())
                .filter(|&f| presence[f][o])
                .map(|f| names[f].clone())
                .collect()
        })
        .collect();
    SparsityReport {
        total_weights: total,
        nonzero_weights: nonzero,
        pruned_fraction: if total == 0 { 0.0 } else { 1.0 - nonzero as f64 / total as f64 },
        hidden_neurons: layers.iter().map(|l| l.neurons).sum(),
        pruned_neurons: layers.iter().map(|l| l.pruned_neurons.len()).sum(),
        layers,
        features_per_output,
    }
}
