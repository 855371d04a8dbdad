//! Experiment configuration and the pipeline that turns it into artifacts.

pub mod config;
pub mod io;
pub mod pipeline;

pub use config::{DataSpec, EvaluationSpec, ExperimentConfig, ModelSpec, TrainingSpec};
pub use pipeline::{
    fit_replicate, run_all, run_analyze, run_evaluate, run_simulate, run_train, Layout,
    ModelArtifact,
};
