//! Excitation experiments: random initial conditions, randomized proportional
//! control inputs, and regression datasets built from the resulting
//! trajectories.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{
    feature_row, simulate_controlled, CellInput, CellState, SimConstants, TimeSeries, FEATURE_DIM,
    FEATURE_NAMES, INPUT_DIM, STATE_DIM,
};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Uniform draw. Always consumes one value from `rng`, also for a
    /// degenerate interval, so that stream positions do not depend on the
    /// interval widths.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t: f64 = rng.gen();
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * t
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::Config(format!(
                "interval {name} = [{}, {}] is not a valid closed interval",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Initial-condition intervals. Alumina and AlF3 are given as bath mass
/// fractions and converted to masses together with the sampled cryolite mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSampler {
    pub x1: Interval,
    pub c_x2: Interval,
    pub c_x3: Interval,
    pub x4: Interval,
    pub x5: Interval,
    pub x6: Interval,
    pub x7: Interval,
    pub x8: Interval,
}

impl Default for InitSampler {
    fn default() -> Self {
        Self {
            x1: Interval::fixed(3260.0),
            c_x2: Interval::new(0.02, 0.03),
            c_x3: Interval::new(0.10, 0.12),
            x4: Interval::new(13500.0, 14000.0),
            x5: Interval::new(9950.0, 10000.0),
            x6: Interval::fixed(975.0),
            x7: Interval::fixed(816.0),
            x8: Interval::fixed(580.0),
        }
    }
}

impl InitSampler {
    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [
            ("x1", &self.x1),
            ("c_x2", &self.c_x2),
            ("c_x3", &self.c_x3),
            ("x4", &self.x4),
            ("x5", &self.x5),
            ("x6", &self.x6),
            ("x7", &self.x7),
            ("x8", &self.x8),
        ] {
            iv.validate(name)?;
        }
        if self.c_x2.lo < 0.0 || self.c_x3.lo < 0.0 || self.c_x2.hi + self.c_x3.hi >= 1.0 {
            return Err(Error::Config(
                "bath fractions must be non-negative with c_x2 + c_x3 < 1".into(),
            ));
        }
        Ok(())
    }

    /// Draws one initial state. Variables are drawn in the order
    /// x1, c_x2, c_x3, x4, x5, x6, x7, x8.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> CellState<T> {
        let x1 = self.x1.sample(rng);
        let c2 = self.c_x2.sample(rng);
        let c3 = self.c_x3.sample(rng);
        let x4 = self.x4.sample(rng);
        let x5 = self.x5.sample(rng);
        let x6 = self.x6.sample(rng);
        let x7 = self.x7.sample(rng);
        let x8 = self.x8.sample(rng);
        let bath = x4 / (1.0 - c2 - c3);
        CellState([x1, c2 * bath, c3 * bath, x4, x5, x6, x7, x8].map(T::lit))
    }
}

/// Draws an initial state from a freshly seeded generator.
pub fn sample_initial_state<T: Scalar>(sampler: &InitSampler, seed: u64) -> CellState<T> {
    sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Process variable fed back by a proportional rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// `c_x2 = x2 / (x2 + x3 + x4)`.
    AluminaFraction,
    /// `c_x3 = x3 / (x2 + x3 + x4)`.
    Alf3Fraction,
    /// `x5`.
    MetalMass,
}

impl Measurement {
    fn read<T: Scalar>(self, state: &CellState<T>) -> f64 {
        match self {
            Measurement::AluminaFraction => (state.alumina_mass() / state.bath_mass()).as_f64(),
            Measurement::Alf3Fraction => (state.alf3_mass() / state.bath_mass()).as_f64(),
            Measurement::MetalMass => state.metal_mass().as_f64(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deterministic {
    Constant { value: f64 },
    /// `gain * (setpoint - measured)`.
    Proportional {
        gain: f64,
        setpoint: f64,
        measured: Measurement,
    },
}

/// One control input: deterministic term plus a random term that is redrawn
/// every `hold_steps` samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRule {
    pub deterministic: Deterministic,
    pub random: Interval,
    pub hold_steps: usize,
    /// Impulse inputs (feeds, tapping) are non-negative and carry no random
    /// term while the controller requests nothing.
    pub impulse: bool,
}

impl ControlRule {
    fn deterministic_term<T: Scalar>(&self, state: &CellState<T>) -> f64 {
        match self.deterministic {
            Deterministic::Constant { value } => value,
            Deterministic::Proportional {
                gain,
                setpoint,
                measured,
            } => gain * (setpoint - measured.read(state)),
        }
    }

    /// Combines a deterministic and a random term.
    pub fn combine(&self, deterministic: f64, random: f64) -> f64 {
        if !self.impulse {
            return deterministic + random;
        }
        let requested = deterministic.max(0.0);
        if requested == 0.0 {
            0.0
        } else {
            (requested + random).max(0.0)
        }
    }
}

/// Excitation policy for all five inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlPolicy {
    pub u1: ControlRule,
    pub u2: ControlRule,
    pub u3: ControlRule,
    pub u4: ControlRule,
    pub u5: ControlRule,
    /// Interprets impulse values as the mass delivered over one sampling
    /// interval, applied as the rate `value / dt` during that interval.
    pub impulse_as_amount: bool,
}

impl Default for ControlPolicy {
    fn default() -> Self {
        let impulse = |gain, setpoint, measured, half_width: f64| ControlRule {
            deterministic: Deterministic::Proportional {
                gain,
                setpoint,
                measured,
            },
            random: Interval::new(-half_width, half_width),
            hold_steps: 1,
            impulse: true,
        };
        let held = |value, half_width: f64| ControlRule {
            deterministic: Deterministic::Constant { value },
            random: Interval::new(-half_width, half_width),
            hold_steps: 30,
            impulse: false,
        };
        Self {
            u1: impulse(3e4, 0.023, Measurement::AluminaFraction, 2.0),
            u2: held(14e3, 7e3),
            u3: impulse(13e3, 0.105, Measurement::Alf3Fraction, 0.5),
            u4: impulse(-2.0, 10e3, Measurement::MetalMass, 2.0),
            u5: held(0.05, 0.015),
            impulse_as_amount: true,
        }
    }
}

impl ControlPolicy {
    pub fn rules(&self) -> [&ControlRule; INPUT_DIM] {
        [&self.u1, &self.u2, &self.u3, &self.u4, &self.u5]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, rule) in self.rules().iter().enumerate() {
            rule.random.validate(&format!("u{} random term", i + 1))?;
            if rule.hold_steps == 0 {
                return Err(Error::Config(format!("u{} hold_steps must be >= 1", i + 1)));
            }
        }
        Ok(())
    }
}

/// Stateful signal generator: owns the random stream and the held random
/// terms.
#[derive(Clone, Debug)]
pub struct Controller<'a, R> {
    policy: &'a ControlPolicy,
    dt: f64,
    rng: R,
    held: [Option<f64>; INPUT_DIM],
}

impl<'a, R: Rng> Controller<'a, R> {
    pub fn new(policy: &'a ControlPolicy, dt: f64, rng: R) -> Self {
        Self {
            policy,
            dt,
            rng,
            held: [None; INPUT_DIM],
        }
    }

    /// Input applied from sample `step` to `step + 1`. A random term is
    /// redrawn whenever `step` is a multiple of its hold period.
    pub fn control_signal<T: Scalar>(&mut self, state: &CellState<T>, step: usize) -> CellInput<T> {
        let mut u = [T::zero(); INPUT_DIM];
        for (i, rule) in self.policy.rules().into_iter().enumerate() {
            if step.is_multiple_of(rule.hold_steps) || self.held[i].is_none() {
                self.held[i] = Some(rule.random.sample(&mut self.rng));
            }
            let random = self.held[i].unwrap_or(0.0);
            let mut value = rule.combine(rule.deterministic_term(state), random);
            if rule.impulse && self.policy.impulse_as_amount {
                value /= self.dt;
            }
            u[i] = T::lit(value);
        }
        CellInput(u)
    }

    pub fn into_rng(self) -> R {
        self.rng
    }
}

/// Simulates one excitation experiment of `steps` integration steps
/// (`steps + 1` samples). The initial state and every random term come from a
/// single stream seeded with `seed`.
pub fn simulate_series<T: Scalar>(
    steps: usize,
    sampler: &InitSampler,
    policy: &ControlPolicy,
    consts: &SimConstants<T>,
    seed: u64,
) -> Result<TimeSeries<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = sampler.sample(&mut rng);
    let mut controller = Controller::new(policy, consts.dt.as_f64(), rng);
    simulate_controlled(x0, steps, consts, |x, k| controller.control_signal(x, k))
}

fn simulate_many<T: Scalar>(
    n: usize,
    steps: usize,
    sampler: &InitSampler,
    policy: &ControlPolicy,
    consts: &SimConstants<T>,
    base_seed: u64,
) -> Result<Vec<TimeSeries<T>>> {
    sampler.validate()?;
    policy.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            simulate_series(steps, sampler, policy, consts, series_seed(base_seed, i)).map_err(|e| {
                Error::Series {
                    series: i,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

/// Seed of series `index` within a set.
pub fn series_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Per-column z-score statistics (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Normalization<T> {
    pub input_mean: Vec<T>,
    pub input_std: Vec<T>,
    pub target_mean: Vec<T>,
    pub target_std: Vec<T>,
}

fn column_stats<T: Scalar, const N: usize>(rows: &[[T; N]]) -> (Vec<T>, Vec<T>) {
    let n = T::lit(rows.len() as f64);
    let mut mean = vec![T::zero(); N];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += *v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); N];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (*v - *m) * (*v - *m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    (mean, std)
}

// Constant columns are centred but not scaled.
fn scale<T: Scalar>(std: T) -> T {
    if std > T::zero() {
        std
    } else {
        T::one()
    }
}

impl<T: Scalar> Normalization<T> {
    pub fn fit(inputs: &[[T; FEATURE_DIM]], targets: &[[T; STATE_DIM]]) -> Self {
        let (input_mean, input_std) = column_stats(inputs);
        let (target_mean, target_std) = column_stats(targets);
        Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    /// Identity transform.
    pub fn identity() -> Self {
        Self {
            input_mean: vec![T::zero(); FEATURE_DIM],
            input_std: vec![T::one(); FEATURE_DIM],
            target_mean: vec![T::zero(); STATE_DIM],
            target_std: vec![T::one(); STATE_DIM],
        }
    }

    pub fn normalize_input(&self, row: &[T; FEATURE_DIM]) -> [T; FEATURE_DIM] {
        std::array::from_fn(|i| (row[i] - self.input_mean[i]) / scale(self.input_std[i]))
    }

    pub fn normalize_target(&self, row: &[T; STATE_DIM]) -> [T; STATE_DIM] {
        std::array::from_fn(|i| (row[i] - self.target_mean[i]) / scale(self.target_std[i]))
    }

    pub fn denormalize_target(&self, row: &[T]) -> [T; STATE_DIM] {
        std::array::from_fn(|i| row[i] * scale(self.target_std[i]) + self.target_mean[i])
    }

    /// Training-set standard deviation of each state variable.
    pub fn state_std(&self) -> [T; STATE_DIM] {
        std::array::from_fn(|i| self.input_std[i])
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            (self.input_mean.len(), FEATURE_DIM),
            (self.input_std.len(), FEATURE_DIM),
            (self.target_mean.len(), STATE_DIM),
            (self.target_std.len(), STATE_DIM),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub dt: f64,
}

/// Regression pairs `([x(k), u(k)], (x(k+1) - x(k)) / dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<[T; FEATURE_DIM]>,
    pub targets: Vec<[T; STATE_DIM]>,
    pub normalization: Normalization<T>,
    pub meta: GenerationMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct DatasetSidecar<T> {
    pairs: usize,
    normalization: Normalization<T>,
    meta: GenerationMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Forward-difference pairs of one trajectory.
pub fn regression_pairs<T: Scalar>(series: &TimeSeries<T>) -> Vec<([T; FEATURE_DIM], [T; STATE_DIM])> {
    series
        .inputs
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let (x, next) = (&series.states[k], &series.states[k + 1]);
            let y = std::array::from_fn(|i| (next[i] - x[i]) / series.dt);
            (feature_row(x, u), y)
        })
        .collect()
}

impl<T: Scalar> Dataset<T> {
    /// Builds pairs from every trajectory and fits normalization statistics
    /// on them.
    pub fn from_series(series: &[TimeSeries<T>], meta: GenerationMeta) -> Result<Self> {
        let (inputs, targets): (Vec<_>, Vec<_>) = series.iter().flat_map(regression_pairs).unzip();
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset has no regression pairs".into()));
        }
        let normalization = Normalization::fit(&inputs, &targets);
        Ok(Self {
            inputs,
            targets,
            normalization,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Normalized copies of inputs and targets.
    pub fn normalized(&self) -> (Vec<[T; FEATURE_DIM]>, Vec<[T; STATE_DIM]>) {
        let n = &self.normalization;
        (
            self.inputs.iter().map(|r| n.normalize_input(r)).collect(),
            self.targets.iter().map(|r| n.normalize_target(r)).collect(),
        )
    }

    /// Writes the pairs as CSV (`x1..u5,dx1..dx8`) and the statistics and
    /// generation metadata as a JSON sidecar.
    pub fn save(
        &self,
        csv_path: &Path,
        json_path: &Path,
        comments: &[String],
        provenance: Option<serde_json::Value>,
    ) -> Result<()> {
        let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for c in comments {
            writeln!(out, "# {c}").map_err(|e| Error::io(csv_path, e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = FEATURE_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain((1..=STATE_DIM).map(|i| format!("dx{i}")))
            .collect();
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            w.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;

        let sidecar = DatasetSidecar {
            pairs: self.len(),
            normalization: self.normalization.clone(),
            meta: self.meta.clone(),
            provenance,
        };
        crate::experiment::io::write_json(json_path, &sidecar)
    }
}

/// Simulates `n_series` excitation experiments of `steps` integration steps
/// each and concatenates their regression pairs (`steps` pairs per series).
pub fn generate_training_set<T: Scalar>(
    n_series: usize,
    steps: usize,
    sampler: &InitSampler,
    policy: &ControlPolicy,
    consts: &SimConstants<T>,
    base_seed: u64,
) -> Result<Dataset<T>> {
    if n_series == 0 || steps == 0 {
        return Err(Error::InvalidArgument(
            "training set needs at least one series of at least one step".into(),
        ));
    }
    let series = simulate_many(n_series, steps, sampler, policy, consts, base_seed)?;
    let meta = GenerationMeta {
        base_seed,
        seeds: (0..n_series).map(|i| series_seed(base_seed, i)).collect(),
        steps,
        dt: consts.dt.as_f64(),
    };
    Dataset::from_series(&series, meta)
}

/// Simulates `p` held-out trajectories of `steps` integration steps each.
pub fn generate_test_set<T: Scalar>(
    p: usize,
    steps: usize,
    sampler: &InitSampler,
    policy: &ControlPolicy,
    consts: &SimConstants<T>,
    base_seed: u64,
) -> Result<Vec<TimeSeries<T>>> {
    if p == 0 {
        return Err(Error::InvalidArgument("test set needs at least one series".into()));
    }
    simulate_many(p, steps, sampler, policy, consts, base_seed)
}
