use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Affine map `z = W a + b`. `weights` is row-major with one row per output
/// neuron; `mask[r * cols + c] == false` pins that weight to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    rows: usize,
    cols: usize,
    pub(crate) weights: Vec<T>,
    pub(crate) biases: Vec<T>,
    pub(crate) mask: Vec<bool>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![T::zero(); rows * cols],
            biases: vec![T::zero(); rows],
            mask: vec![true; rows * cols],
        }
    }

    /// Builds a layer from nested rows; every weight starts active.
    pub fn from_rows(rows: &[Vec<T>], biases: Vec<T>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if biases.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: biases.len(),
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            weights: rows.concat(),
            biases,
            mask: vec![true; rows.len() * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weight(&self, row: usize, col: usize) -> T {
        self.weights[row * self.cols + col]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, value: T) {
        let i = row * self.cols + col;
        self.weights[i] = if self.mask[i] { value } else { T::zero() };
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [T] {
        &mut self.biases
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Removes a weight permanently.
    pub fn mask_out(&mut self, row: usize, col: usize) {
        let i = row * self.cols + col;
        self.mask[i] = false;
        self.weights[i] = T::zero();
    }

    /// Weight that is unmasked and nonzero.
    pub fn is_active(&self, row: usize, col: usize) -> bool {
        let i = row * self.cols + col;
        self.mask[i] && self.weights[i] != T::zero()
    }

    pub fn l1_norm(&self) -> T {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// `out = W a + b`.
    pub fn affine(&self, a: &[T], out: &mut [T]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.biases[r];
            for (w, x) in row.iter().zip(a) {
                acc += *w * *x;
            }
            *o = acc;
        }
    }
}

/// Multilayer perceptron with ReLU hidden layers and an affine output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr<T>", into = "ModelRepr<T>", bound = "T: Scalar")]
pub struct MlpModel<T: Scalar> {
    shape: Vec<usize>,
    layers: Vec<DenseLayer<T>>,
}

pub(crate) fn relu<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

impl<T: Scalar> MlpModel<T> {
    fn check_shape(shape: &[usize]) -> Result<()> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network shape {shape:?} needs at least two non-empty layers"
            )));
        }
        Ok(())
    }

    /// All weights and biases zero, nothing masked.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::check_shape(shape)?;
        let layers = shape.windows(2).map(|w| DenseLayer::zeros(w[1], w[0])).collect();
        Ok(Self {
            shape: shape.to_vec(),
            layers,
        })
    }

    /// Fan-in scaled uniform initialization `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`
    /// for weights, zero biases.
    pub fn init(shape: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let bound = (6.0 / layer.cols as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::lit(rng.gen_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("network needs at least one layer".into()))?;
        let mut shape = vec![first.cols];
        for l in &layers {
            let prev = *shape.last().unwrap_or(&0);
            if l.cols != prev {
                return Err(Error::DimensionMismatch {
                    expected: prev,
                    got: l.cols,
                });
            }
            shape.push(l.rows);
        }
        Self::check_shape(&shape)?;
        Ok(Self { shape, layers })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.shape.last().expect("shape has at least two entries")
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn num_active_weights(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights
                    .iter()
                    .zip(&l.mask)
                    .filter(|(w, m)| **m && **w != T::zero())
                    .count()
            })
            .sum()
    }

    /// Evaluates the network on one sample.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (j, layer) in self.layers.iter().enumerate() {
            let mut z = vec![T::zero(); layer.rows];
            layer.affine(&a, &mut z);
            if j < last {
                z.iter_mut().for_each(|v| *v = relu(*v));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn cast<U: Scalar>(&self) -> MlpModel<U> {
        MlpModel {
            shape: self.shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    rows: l.rows,
                    cols: l.cols,
                    weights: l.weights.iter().map(|w| U::lit(w.as_f64())).collect(),
                    biases: l.biases.iter().map(|b| U::lit(b.as_f64())).collect(),
                    mask: l.mask.clone(),
                })
                .collect(),
        }
    }
}

/// On-disk form: row-major nested weight arrays and a 0/1 mask.
#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelRepr<T> {
    shape: Vec<usize>,
    layers: Vec<LayerRepr<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct LayerRepr<T> {
    weights: Vec<Vec<T>>,
    biases: Vec<T>,
    mask: Vec<Vec<u8>>,
}

impl<T: Scalar> From<MlpModel<T>> for ModelRepr<T> {
    fn from(m: MlpModel<T>) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| LayerRepr {
                weights: l.weights.chunks(l.cols).map(<[T]>::to_vec).collect(),
                biases: l.biases.clone(),
                mask: l
                    .mask
                    .chunks(l.cols)
                    .map(|r| r.iter().map(|&b| u8::from(b)).collect())
                    .collect(),
            })
            .collect();
        Self {
            shape: m.shape,
            layers,
        }
    }
}

impl<T: Scalar> TryFrom<ModelRepr<T>> for MlpModel<T> {
    type Error = Error;

    fn try_from(r: ModelRepr<T>) -> Result<Self> {
        let layers = r
            .layers
            .into_iter()
            .map(|l| {
                let mut layer = DenseLayer::from_rows(&l.weights, l.biases)?;
                let mask: Vec<bool> = l.mask.concat().into_iter().map(|b| b != 0).collect();
                if mask.len() != layer.mask.len() {
                    return Err(Error::DimensionMismatch {
                        expected: layer.mask.len(),
                        got: mask.len(),
                    });
                }
                layer.mask = mask;
                for (w, m) in layer.weights.iter_mut().zip(&layer.mask) {
                    if !m {
                        *w = T::zero();
                    }
                }
                Ok(layer)
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Self::from_layers(layers)?;
        if model.shape != r.shape {
            return Err(Error::ShapeMismatch(r.shape, model.shape));
        }
        Ok(model)
    }
}
