//! Experiment configuration read from TOML. Every field has a default, so an
//! empty file describes the full default experiment.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::excitation::{ControlPolicy, InitSampler};
use crate::nn::{Optimizer, TrainConfig, DEFAULT_PRUNE_THRESHOLD, DEFAULT_SHAPE, DEFAULT_SPARSE_LAMBDA};
use crate::sim::{SimConstants, FEATURE_DIM, STATE_DIM};

/// Offset between the training and test series seeds.
pub const TEST_SEED_OFFSET: u64 = 1_000_000;
/// Offset between the data seeds and the replicate initialization seeds.
pub const REPLICATE_SEED_OFFSET: u64 = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// Training-set sizes in series; the set of size `n` is the first `n`
    /// series of the training pool.
    pub train_series: Vec<usize>,
    /// Integration steps per training series (pairs per series).
    pub train_steps: usize,
    pub test_series: usize,
    /// Integration steps per test series.
    pub test_steps: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            train_series: vec![10],
            train_steps: 999,
            test_series: 20,
            test_steps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub prune_threshold: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 128,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            optimizer: Optimizer::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Sparse models are ℓ1-regularized and pruned after training.
    pub sparse: bool,
    /// Same coefficient for every layer of a sparse model.
    pub lambda: Option<f64>,
    /// Per-layer coefficients; overrides `lambda`.
    pub lambdas: Option<Vec<f64>>,
    pub replicates: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            name: "sparse".into(),
            shape: DEFAULT_SHAPE.to_vec(),
            sparse: true,
            lambda: None,
            lambdas: None,
            replicates: 20,
        }
    }
}

impl ModelSpec {
    pub fn dense(replicates: usize) -> Self {
        Self {
            name: "dense".into(),
            sparse: false,
            replicates,
            ..Self::default()
        }
    }

    pub fn sparse(replicates: usize) -> Self {
        Self {
            replicates,
            ..Self::default()
        }
    }

    pub fn layer_lambdas(&self) -> Vec<f64> {
        let layers = self.shape.len().saturating_sub(1);
        match (&self.lambdas, self.sparse) {
            (_, false) => vec![0.0; layers],
            (Some(l), true) => l.clone(),
            (None, true) => vec![self.lambda.unwrap_or(DEFAULT_SPARSE_LAMBDA); layers],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("model '{}': {msg}", self.name)));
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return bad("names may only contain ASCII letters, digits, '_' and '-'".into());
        }
        if self.shape.len() < 2 || self.shape.contains(&0) {
            return bad(format!("invalid shape {:?}", self.shape));
        }
        if self.shape[0] != FEATURE_DIM || self.shape[self.shape.len() - 1] != STATE_DIM {
            return bad(format!(
                "shape {:?} must start with {FEATURE_DIM} inputs and end with {STATE_DIM} outputs",
                self.shape
            ));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !self.sparse && (self.lambda.is_some() || self.lambdas.is_some()) {
            return bad("dense models take no ℓ1 coefficients".into());
        }
        let lambdas = self.layer_lambdas();
        if lambdas.len() != self.shape.len() - 1 {
            return bad(format!(
                "{} lambdas given for {} weight matrices",
                lambdas.len(),
                self.shape.len() - 1
            ));
        }
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("lambdas must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    pub horizons: Vec<usize>,
    /// Test series whose forecast bands are exported.
    pub band_series: usize,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            horizons: vec![200, 300, 500, 1000],
            band_series: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed. Training series use `seed + i`, test series
    /// `seed + TEST_SEED_OFFSET + i`, replicates `seed + REPLICATE_SEED_OFFSET + r`.
    pub seed: u64,
    /// Not part of the configuration hash.
    pub output_dir: PathBuf,
    pub simulator: SimConstants<f64>,
    pub initial: InitSampler,
    pub control: ControlPolicy,
    pub data: DataSpec,
    pub training: TrainingSpec,
    pub models: Vec<ModelSpec>,
    pub evaluation: EvaluationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            simulator: SimConstants::default(),
            initial: InitSampler::default(),
            control: ControlPolicy::default(),
            data: DataSpec::default(),
            training: TrainingSpec::default(),
            models: vec![ModelSpec::dense(20), ModelSpec::sparse(20)],
            evaluation: EvaluationSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        self.initial.validate()?;
        self.control.validate()?;
        let d = &self.data;
        if d.train_series.is_empty() || d.train_series.contains(&0) {
            return Err(Error::Config("train_series must list sizes of at least 1".into()));
        }
        if d.train_steps == 0 {
            return Err(Error::Config("train_steps must be at least 1".into()));
        }
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(t.prune_threshold >= 0.0 && t.prune_threshold.is_finite()) {
            return Err(Error::Config("prune_threshold must be non-negative".into()));
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            m.validate()?;
            if !names.insert(&m.name) {
                return Err(Error::Config(format!("duplicate model name '{}'", m.name)));
            }
        }
        let e = &self.evaluation;
        if e.horizons.contains(&0) {
            return Err(Error::Config("horizons must be at least 1".into()));
        }
        if let Some(h) = e.horizons.iter().find(|&&h| h > d.test_steps) {
            return Err(Error::Config(format!(
                "horizon {h} exceeds test_steps = {}",
                d.test_steps
            )));
        }
        if d.test_series > 0 && e.band_series >= d.test_series {
            return Err(Error::Config(format!(
                "band_series {} is not one of the {} test series",
                e.band_series, d.test_series
            )));
        }
        Ok(())
    }

    /// SHA-256 of the configuration without its output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("configuration serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn train_pool_size(&self) -> usize {
        self.data.train_series.iter().copied().max().unwrap_or(0)
    }

    pub fn test_seed(&self) -> u64 {
        self.seed.wrapping_add(TEST_SEED_OFFSET)
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.seed.wrapping_add(REPLICATE_SEED_OFFSET + replicate as u64)
    }

    pub fn train_config(&self, spec: &ModelSpec, replicate: usize) -> TrainConfig<f64> {
        let t = &self.training;
        TrainConfig {
            lambdas: spec.layer_lambdas(),
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            prune_threshold: if spec.sparse { t.prune_threshold } else { 0.0 },
            seed: self.replicate_seed(replicate),
            optimizer: t.optimizer,
        }
    }

    /// Provenance lines embedded in every artifact.
    pub fn provenance(&self) -> Vec<String> {
        vec![format!("config_sha256={}", self.hash()), format!("seed={}", self.seed)]
    }

    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({ "config_sha256": self.hash(), "seed": self.seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.evaluation.horizons, vec![200, 300, 500, 1000]);
        assert_eq!(c.models.len(), 2);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_overrides() {
        let c = ExperimentConfig::from_toml(
            r#"
            seed = 7
            [simulator]
            dt = 15.0
            [control.u2]
            deterministic = { kind = "constant", value = 15000.0 }
            random = { lo = -1.0, hi = 1.0 }
            hold_steps = 10
            impulse = false
            [[models]]
            name = "tiny"
            shape = [13, 6, 6, 6, 8]
            lambdas = [0.1, 0.0, 0.0, 0.2]
            replicates = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.simulator.dt, 15.0);
        assert_eq!(c.simulator.k0, SimConstants::<f64>::default().k0);
        assert_eq!(c.control.u2.hold_steps, 10);
        assert_eq!(c.control.u4, ControlPolicy::default().u4);
        assert_eq!(c.models[0].layer_lambdas(), vec![0.1, 0.0, 0.0, 0.2]);
        assert!(c.models[0].sparse);
    }

    #[test]
    fn inconsistent_configs_rejected() {
        for text in [
            "[[models]]\nshape = [12, 8]",
            "[[models]]\nshape = [13, 4, 7]",
            "[[models]]\nname = \"a b\"",
            "[[models]]\nsparse = false\nlambdas = [0.0, 0.0]",
            "[[models]]\nsparse = false\nlambda = 0.1",
            "[[models]]\nlambdas = [0.1]",
            "[[models]]\nname = \"x\"\n[[models]]\nname = \"x\"",
            "[evaluation]\nhorizons = [1001]",
            "[data]\ntrain_series = []",
            "[training]\nbatch_size = 0",
            "[simulator]\ndt = -1.0",
            "unknown_key = 1",
            "seed = \"abc\"",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(err.is_config(), "{text}: {err}");
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn seeds_are_disjoint() {
        let c = ExperimentConfig::default();
        assert_eq!(c.test_seed(), TEST_SEED_OFFSET);
        assert_ne!(c.replicate_seed(0), c.replicate_seed(1));
        let t = c.train_config(&c.models[0], 3);
        assert_eq!(t.lambdas, vec![0.0; 4]);
        assert_eq!(t.prune_threshold, 0.0);
        let s = c.train_config(&c.models[1], 3);
        assert_eq!(s.lambdas, vec![DEFAULT_SPARSE_LAMBDA; 4]);
        assert_eq!(s.seed, REPLICATE_SEED_OFFSET + 3);
    }
}
