//! Rolling forecasts without measurement feedback and their AN-RFMSE
//! (average normalized rolling-forecast mean squared error).

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::Normalization;
use crate::nn::MlpModel;
use crate::scalar::Scalar;
use crate::sim::{feature_row, rhs, CellInput, CellState, SimConstants, TimeSeries, STATE_DIM, STATE_NAMES};

/// Per-step normalized squared errors are capped at this value; non-finite
/// errors count as the cap.
pub const ERROR_CAP: f64 = 1e12;

/// Anything that predicts the state derivative from a state and an input.
pub trait DerivativeModel<T: Scalar>: Sync {
    fn derivative(&self, state: &CellState<T>, input: &CellInput<T>) -> Result<[T; STATE_DIM]>;
}

impl<T: Scalar, M: DerivativeModel<T> + ?Sized> DerivativeModel<T> for &M {
    fn derivative(&self, state: &CellState<T>, input: &CellInput<T>) -> Result<[T; STATE_DIM]> {
        (**self).derivative(state, input)
    }
}

/// A network together with the statistics of the data it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedModel<T: Scalar> {
    pub network: MlpModel<T>,
    pub normalization: Normalization<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn new(network: MlpModel<T>, normalization: Normalization<T>) -> Result<Self> {
        normalization.validate()?;
        let (i, o) = (network.input_dim(), network.output_dim());
        if i != crate::sim::FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: crate::sim::FEATURE_DIM, got: i });
        }
        if o != STATE_DIM {
            return Err(Error::DimensionMismatch { expected: STATE_DIM, got: o });
        }
        Ok(Self { network, normalization })
    }
}

impl<T: Scalar> DerivativeModel<T> for TrainedModel<T> {
    fn derivative(&self, state: &CellState<T>, input: &CellInput<T>) -> Result<[T; STATE_DIM]> {
        let x = self.normalization.normalize_input(&feature_row(state, input));
        let y = self.network.forward(&x)?;
        Ok(self.normalization.denormalize_target(&y))
    }
}

/// Returns the simulator's exact right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatorOracle<T: Scalar>(pub SimConstants<T>);

impl<T: Scalar> DerivativeModel<T> for SimulatorOracle<T> {
    fn derivative(&self, state: &CellState<T>, input: &CellInput<T>) -> Result<[T; STATE_DIM]> {
        rhs(state, input, &self.0)
    }
}

/// Always predicts a zero derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZeroModel;

impl<T: Scalar> DerivativeModel<T> for ZeroModel {
    fn derivative(&self, _: &CellState<T>, _: &CellInput<T>) -> Result<[T; STATE_DIM]> {
        Ok([T::zero(); STATE_DIM])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forecast<T> {
    /// `x̂(t_0) .. x̂(t_k)`; shorter than requested when the forecast diverged.
    pub states: Vec<CellState<T>>,
    /// First step whose estimate could not be computed or was non-finite.
    pub diverged_at: Option<usize>,
}

impl<T> Forecast<T> {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Forward-Euler rollout `x̂(t_{i+1}) = x̂(t_i) + f̂(x̂(t_i), u(t_i))·dt` for `n`
/// steps from `x0`, fed only with the recorded inputs.
pub fn rolling_forecast<T: Scalar, M: DerivativeModel<T> + ?Sized>(
    model: &M,
    x0: &CellState<T>,
    inputs: &[CellInput<T>],
    n: usize,
    dt: T,
) -> Result<Forecast<T>> {
    if n > inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "forecast horizon {n} exceeds the {} recorded inputs",
            inputs.len()
        )));
    }
    let mut states = Vec::with_capacity(n + 1);
    states.push(*x0);
    for (i, u) in inputs[..n].iter().enumerate() {
        let x = states[i];
        let next = model.derivative(&x, u).map(|f| {
            let mut y = x;
            for (s, d) in y.0.iter_mut().zip(f) {
                *s += d * dt;
            }
            y
        });
        match next {
            Ok(y) if y.is_finite() => states.push(y),
            _ => {
                return Ok(Forecast {
                    states,
                    diverged_at: Some(i + 1),
                })
            }
        }
    }
    Ok(Forecast {
        states,
        diverged_at: None,
    })
}

/// `(1/p) Σ_i (1/n) Σ_{j=1..n} ((x̂_i(t_j) − x_i(t_j)) / std_i)²` over the
/// `p = 8` states. Steps missing from a truncated forecast count as
/// [`ERROR_CAP`], as does any capped per-step error.
pub fn an_rfmse<T: Scalar>(
    forecast: &[CellState<T>],
    truth: &[CellState<T>],
    train_std: &[T; STATE_DIM],
    n: usize,
) -> Result<f64> {
    if let Some(i) = train_std.iter().position(|s| !(s.as_f64() > 0.0)) {
        return Err(Error::ZeroStd(i));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("AN-RFMSE needs a horizon of at least one step".into()));
    }
    if truth.len() < n + 1 {
        return Err(Error::InvalidArgument(format!(
            "truth has {} states, horizon {n} needs {}",
            truth.len(),
            n + 1
        )));
    }
    let mut per_state = [0.0f64; STATE_DIM];
    for j in 1..=n {
        for (i, acc) in per_state.iter_mut().enumerate() {
            let e = match forecast.get(j) {
                Some(x) => {
                    let z = (x[i].as_f64() - truth[j][i].as_f64()) / train_std[i].as_f64();
                    z * z
                }
                None => f64::INFINITY,
            };
            *acc += if e.is_finite() { e.min(ERROR_CAP) } else { ERROR_CAP };
        }
    }
    Ok(per_state.iter().map(|s| s / n as f64).sum::<f64>() / STATE_DIM as f64)
}

/// Models evaluated and summarized together.
#[derive(Clone, Debug)]
pub struct ModelGroup<'a, M> {
    pub name: String,
    pub models: &'a [M],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub models: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub diverged_models: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    /// `matrix[model][series]`.
    pub matrix: Vec<Vec<f64>>,
    /// Row means of `matrix`.
    pub vector: Vec<f64>,
    pub diverged: Vec<Vec<bool>>,
    pub groups: Vec<GroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub model_names: Vec<String>,
    /// Group index of each model.
    pub model_groups: Vec<usize>,
    pub group_names: Vec<String>,
    pub series: usize,
    pub train_std: [f64; STATE_DIM],
    pub horizons: Vec<HorizonReport>,
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn summarize(name: &str, values: &[f64], diverged: usize) -> GroupSummary {
    GroupSummary {
        name: name.to_string(),
        models: values.len(),
        median: median(values),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        diverged_models: diverged,
    }
}

/// Forecasts every test series with every model up to the longest horizon
/// and reports AN-RFMSE per horizon. `train_std` normalizes the errors.
pub fn evaluate_population<T: Scalar, M: DerivativeModel<T>>(
    groups: &[ModelGroup<'_, M>],
    test_set: &[TimeSeries<T>],
    horizons: &[usize],
    train_std: &[T; STATE_DIM],
) -> Result<ForecastReport> {
    if groups.is_empty() || groups.iter().any(|g| g.models.is_empty()) {
        return Err(Error::InvalidArgument("every model group needs at least one model".into()));
    }
    if test_set.is_empty() || horizons.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs test series and horizons".into()));
    }
    let n_max = *horizons.iter().max().expect("non-empty");
    if let Some(s) = test_set.iter().position(|s| s.inputs.len() < n_max) {
        return Err(Error::InvalidArgument(format!(
            "test series {s} has {} steps, horizon {n_max} requested",
            test_set[s].inputs.len()
        )));
    }
    if let Some(i) = train_std.iter().position(|s| !(s.as_f64() > 0.0)) {
        return Err(Error::ZeroStd(i));
    }

    let models: Vec<(usize, usize, &M)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| grp.models.iter().enumerate().map(move |(i, m)| (g, i, m)))
        .collect();
    let cells: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..test_set.len()).map(move |s| (m, s)))
        .collect();
    let forecasts: Vec<Forecast<T>> = cells
        .par_iter()
        .map(|&(m, s)| {
            let ts = &test_set[s];
            rolling_forecast(models[m].2, &ts.states[0], &ts.inputs, n_max, ts.dt)
        })
        .collect::<Result<_>>()?;

    let n_series = test_set.len();
    let mut reports = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let mut matrix = vec![vec![0.0; n_series]; models.len()];
        let mut diverged = vec![vec![false; n_series]; models.len()];
        for (&(m, s), f) in cells.iter().zip(&forecasts) {
            matrix[m][s] = an_rfmse(&f.states, &test_set[s].states, train_std, h)?;
            diverged[m][s] = f.diverged_at.is_some_and(|k| k <= h);
        }
        let vector: Vec<f64> = matrix
            .iter()
            .map(|row| row.iter().sum::<f64>() / n_series as f64)
            .collect();
        let summaries = groups
            .iter()
            .enumerate()
            .map(|(g, grp)| {
                let idx: Vec<usize> = (0..models.len()).filter(|&m| models[m].0 == g).collect();
                let values: Vec<f64> = idx.iter().map(|&m| vector[m]).collect();
                let div = idx.iter().filter(|&&m| diverged[m].iter().any(|&d| d)).count();
                summarize(&grp.name, &values, div)
            })
            .collect();
        reports.push(HorizonReport {
            horizon: h,
            matrix,
            vector,
            diverged,
            groups: summaries,
        });
    }

    Ok(ForecastReport {
        model_names: models
            .iter()
            .map(|&(g, i, _)| format!("{}_{:02}", groups[g].name, i))
            .collect(),
        model_groups: models.iter().map(|m| m.0).collect(),
        group_names: groups.iter().map(|g| g.name.clone()).collect(),
        series: n_series,
        train_std: std::array::from_fn(|i| train_std[i].as_f64()),
        horizons: reports,
    })
}

impl ForecastReport {
    pub fn horizon(&self, n: usize) -> Option<&HorizonReport> {
        self.horizons.iter().find(|h| h.horizon == n)
    }

    pub fn group(&self, n: usize, name: &str) -> Option<&GroupSummary> {
        self.horizon(n)?.groups.iter().find(|g| g.name == name)
    }

    /// One row per model; per horizon one column per test series, the row
    /// mean, and a divergence flag.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("model,group");
        for h in &self.horizons {
            for j in 0..self.series {
                let _ = write!(s, ",n{}_s{}", h.horizon, j + 1);
            }
            let _ = write!(s, ",n{}_mean,n{}_diverged", h.horizon, h.horizon);
        }
        s.push('\n');
        for (m, name) in self.model_names.iter().enumerate() {
            let _ = write!(s, "{name},{}", self.group_names[self.model_groups[m]]);
            for h in &self.horizons {
                for v in &h.matrix[m] {
                    let _ = write!(s, ",{v:e}");
                }
                let d = h.diverged[m].iter().any(|&d| d);
                let _ = write!(s, ",{:e},{}", h.vector[m], u8::from(d));
            }
            s.push('\n');
        }
        s
    }

    /// Median, minimum and maximum per group and horizon, for bar plots.
    pub fn summary_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("horizon,group,models,median,min,max,diverged_models\n");
        for h in &self.horizons {
            for g in &h.groups {
                let _ = writeln!(
                    s,
                    "{},{},{},{:e},{:e},{:e},{}",
                    h.horizon, g.name, g.models, g.median, g.min, g.max, g.diverged_models
                );
            }
        }
        s
    }
}

/// Mean and standard deviation of a model group's forecasts of one series,
/// alongside the truth. Diverged forecasts drop out once they end.
pub fn forecast_bands<T: Scalar, M: DerivativeModel<T>>(
    models: &[M],
    series: &TimeSeries<T>,
    n: usize,
    comments: &[String],
) -> Result<String> {
    let forecasts: Vec<Forecast<T>> = models
        .par_iter()
        .map(|m| rolling_forecast(m, &series.states[0], &series.inputs, n, series.dt))
        .collect::<Result<_>>()?;
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str("step,models");
    for name in STATE_NAMES {
        let _ = write!(s, ",{name}_true,{name}_mean,{name}_std");
    }
    s.push('\n');
    for j in 0..=n {
        let live: Vec<&CellState<T>> = forecasts.iter().filter_map(|f| f.states.get(j)).collect();
        let _ = write!(s, "{j},{}", live.len());
        for i in 0..STATE_DIM {
            let truth = series.states[j][i].as_f64();
            let vals: Vec<f64> = live.iter().map(|x| x[i].as_f64()).collect();
            if vals.is_empty() {
                let _ = write!(s, ",{truth:e},,");
                continue;
            }
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k).sqrt();
            let _ = write!(s, ",{truth:e},{mean:e},{std:e}");
        }
        s.push('\n');
    }
    Ok(s)
}
