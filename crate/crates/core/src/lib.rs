//! System identification of an aluminum electrolysis cell with dense and
//! ℓ1-sparsified ReLU networks.
//!
//! * [`sim`]: cell model and RK4 integration
//! * [`excitation`]: initial conditions, randomized control signals, datasets
//! * [`nn`]: feed-forward networks, backpropagation, ℓ1 training, pruning
//! * [`analysis`]: learned structure, feature reachability, region bounds
//! * [`eval`]: rolling forecasts and AN-RFMSE
//! * [`experiment`]: configuration and the artifact-producing pipeline
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the pipeline.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod eval;
pub mod excitation;
pub mod experiment;
pub mod nn;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type State = sim::CellState<f64>;
pub type Input = sim::CellInput<f64>;
pub type Constants = sim::SimConstants<f64>;
pub type Trajectory = sim::TimeSeries<f64>;
pub type Dataset = excitation::Dataset<f64>;
pub type Normalization = excitation::Normalization<f64>;
pub type Mlp = nn::MlpModel<f64>;
pub type TrainConfig = nn::TrainConfig<f64>;
pub type TrainedModel = eval::TrainedModel<f64>;

pub type StateF32 = sim::CellState<f32>;
pub type InputF32 = sim::CellInput<f32>;
pub type MlpF32 = nn::MlpModel<f32>;
