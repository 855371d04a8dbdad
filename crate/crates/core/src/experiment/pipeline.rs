//! Artifact-producing pipeline stages. Each stage reads what the previous
//! one wrote below the output directory, so stages can run as separate
//! processes. Every artifact carries the configuration hash and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelSpec};
use super::io::{read_json, write_json, write_text};
use crate::analysis::{
    extract_structure, frequency_table, matrix_op_count, structure_histogram, StructureCount,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_population, forecast_bands, ForecastReport, ModelGroup, TrainedModel};
use crate::excitation::{generate_test_set, series_seed, Dataset, GenerationMeta};
use crate::nn::{dataset_cost, prune, sparsity_report, train, MlpModel, SparsityReport, TrainConfig};
use crate::sim::TimeSeries;

/// File locations below the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn train_series(&self, i: usize) -> PathBuf {
        self.root.join("data/train").join(format!("series_{i:03}.csv"))
    }

    pub fn test_series(&self, i: usize) -> PathBuf {
        self.root.join("data/test").join(format!("series_{i:03}.csv"))
    }

    pub fn simulate_meta(&self) -> PathBuf {
        self.root.join("data/simulate.json")
    }

    pub fn model_dir(&self, n: usize) -> PathBuf {
        self.root.join("models").join(format!("n{n:02}"))
    }

    pub fn dataset(&self, n: usize) -> (PathBuf, PathBuf) {
        let d = self.model_dir(n);
        (d.join("dataset.csv"), d.join("dataset.json"))
    }

    pub fn model(&self, n: usize, name: &str, r: usize) -> PathBuf {
        self.model_dir(n).join(format!("{name}_{r:02}.json"))
    }

    pub fn loss(&self, n: usize, name: &str, r: usize) -> PathBuf {
        self.model_dir(n).join(format!("{name}_{r:02}_loss.csv"))
    }

    pub fn report_dir(&self, n: usize) -> PathBuf {
        self.root.join("reports").join(format!("n{n:02}"))
    }

    pub fn graph(&self, n: usize, name: &str, r: usize) -> PathBuf {
        self.root
            .join("graphs")
            .join(format!("n{n:02}"))
            .join(format!("{name}_{r:02}.dot"))
    }

    pub fn plot_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
}

fn layout(config: &ExperimentConfig) -> Layout {
    Layout::new(&config.output_dir)
}

fn comment_block(lines: &[String], prefix: &str) -> String {
    lines.iter().map(|l| format!("{prefix} {l}\n")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateMeta {
    pub provenance: serde_json::Value,
    pub dt: f64,
    pub train: GenerationMeta,
    pub test: Option<GenerationMeta>,
}

/// Simulates the training pool and the test set.
pub fn run_simulate(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let l = layout(config);
    let d = &config.data;
    let k = &config.simulator;
    let pool = config.train_pool_size();
    let comments = config.provenance();
    let mut written = Vec::new();

    let meta = |base: u64, n: usize, steps: usize| GenerationMeta {
        base_seed: base,
        seeds: (0..n).map(|i| series_seed(base, i)).collect(),
        steps,
        dt: k.dt,
    };
    let train = generate_test_set(pool, d.train_steps, &config.initial, &config.control, k, config.seed)?;
    for (i, s) in train.iter().enumerate() {
        let path = l.train_series(i);
        super::io::ensure_parent(&path)?;
        s.save(&path, &series_comments(&comments, series_seed(config.seed, i)))?;
        written.push(path);
    }
    let mut test_meta = None;
    if d.test_series > 0 {
        let base = config.test_seed();
        let test = generate_test_set(d.test_series, d.test_steps, &config.initial, &config.control, k, base)?;
        for (i, s) in test.iter().enumerate() {
            let path = l.test_series(i);
            super::io::ensure_parent(&path)?;
            s.save(&path, &series_comments(&comments, series_seed(base, i)))?;
            written.push(path);
        }
        test_meta = Some(meta(base, d.test_series, d.test_steps));
    }
    let summary = SimulateMeta {
        provenance: config.provenance_json(),
        dt: k.dt,
        train: meta(config.seed, pool, d.train_steps),
        test: test_meta,
    };
    write_json(&l.simulate_meta(), &summary)?;
    written.push(l.simulate_meta());
    Ok(written)
}

fn series_comments(base: &[String], series_seed: u64) -> Vec<String> {
    let mut c = base.to_vec();
    c.push(format!("series_seed={series_seed}"));
    c
}

fn load_series(paths: impl Iterator<Item = PathBuf>, dt: f64) -> Result<Vec<TimeSeries<f64>>> {
    paths
        .map(|p| {
            if p.exists() {
                TimeSeries::load(&p, dt)
            } else {
                Err(Error::MissingArtifact(p.display().to_string()))
            }
        })
        .collect()
}

/// A trained replicate as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub provenance: serde_json::Value,
    pub name: String,
    pub train_series: usize,
    pub replicate: usize,
    pub seed: u64,
    pub train_config: TrainConfig<f64>,
    /// Cost of the stored (pruned) network on its normalized training set.
    pub final_cost: f64,
    pub pruned_fraction: f64,
    pub model: TrainedModel<f64>,
}

/// Trains a freshly initialized network on normalized data and prunes it.
/// Returns the pruned network and the per-epoch cost.
pub fn fit_replicate(
    shape: &[usize],
    dataset: &Dataset<f64>,
    config: &TrainConfig<f64>,
) -> Result<(MlpModel<f64>, Vec<f64>, f64)> {
    let (x, y) = dataset.normalized();
    let x: Vec<Vec<f64>> = x.iter().map(|r| r.to_vec()).collect();
    let y: Vec<Vec<f64>> = y.iter().map(|r| r.to_vec()).collect();
    let init = MlpModel::init(shape, config.seed)?;
    let outcome = train(init, &x, &y, config)?;
    let pruned = prune(&outcome.model, config.prune_threshold);
    let cost = dataset_cost(&pruned, &x, &y, &config.lambdas)?.total;
    Ok((pruned, outcome.history, cost))
}

fn training_dataset(config: &ExperimentConfig, pool: &[TimeSeries<f64>], n: usize) -> Result<Dataset<f64>> {
    let meta = GenerationMeta {
        base_seed: config.seed,
        seeds: (0..n).map(|i| series_seed(config.seed, i)).collect(),
        steps: config.data.train_steps,
        dt: config.simulator.dt,
    };
    Dataset::from_series(&pool[..n], meta)
}

/// Trains every replicate of every model spec on every training-set size.
pub fn run_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let l = layout(config);
    let pool = load_series((0..config.train_pool_size()).map(|i| l.train_series(i)), config.simulator.dt)?;
    let comments = config.provenance();
    let mut written = Vec::new();

    let sizes = &config.data.train_series;
    let datasets: Vec<Dataset<f64>> = sizes
        .iter()
        .map(|&n| training_dataset(config, &pool, n))
        .collect::<Result<_>>()?;
    for (&n, ds) in sizes.iter().zip(&datasets) {
        let (csv, json) = l.dataset(n);
        super::io::ensure_parent(&csv)?;
        ds.save(&csv, &json, &comments, Some(config.provenance_json()))?;
        written.extend([csv, json]);
    }

    let jobs: Vec<(usize, &ModelSpec, usize)> = (0..sizes.len())
        .flat_map(|g| {
            config
                .models
                .iter()
                .flat_map(move |m| (0..m.replicates).map(move |r| (g, m, r)))
        })
        .collect();
    let outputs: Vec<Vec<PathBuf>> = jobs
        .par_iter()
        .map(|&(g, spec, r)| {
            let n = sizes[g];
            let ds = &datasets[g];
            let tc = config.train_config(spec, r);
            let (model, history, final_cost) = fit_replicate(&spec.shape, ds, &tc)?;
            let artifact = ModelArtifact {
                provenance: config.provenance_json(),
                name: spec.name.clone(),
                train_series: n,
                replicate: r,
                seed: tc.seed,
                pruned_fraction: sparsity_report(&model).pruned_fraction,
                train_config: tc,
                final_cost,
                model: TrainedModel::new(model, ds.normalization.clone())?,
            };
            let mp = l.model(n, &spec.name, r);
            write_json(&mp, &artifact)?;
            let mut loss = comment_block(&comments, "#");
            loss.push_str("epoch,cost\n");
            for (e, c) in history.iter().enumerate() {
                let _ = writeln!(loss, "{},{c:e}", e + 1);
            }
            let lp = l.loss(n, &spec.name, r);
            write_text(&lp, &loss)?;
            Ok(vec![mp, lp])
        })
        .collect::<Result<_>>()?;
    written.extend(outputs.into_iter().flatten());
    Ok(written)
}

fn load_group(config: &ExperimentConfig, n: usize, spec: &ModelSpec) -> Result<Vec<ModelArtifact>> {
    let l = layout(config);
    (0..spec.replicates)
        .map(|r| read_json::<ModelArtifact>(&l.model(n, &spec.name, r)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SparsitySummary {
    provenance: serde_json::Value,
    model: String,
    train_series: usize,
    dense_matrix_operations: usize,
    mean_pruned_fraction: f64,
    min_pruned_fraction: f64,
    replicates: Vec<SparsityReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OutputStructures {
    output: String,
    linear_collapse_percent: f64,
    structures: Vec<StructureCount>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StructureSummary {
    provenance: serde_json::Value,
    model: String,
    train_series: usize,
    outputs: Vec<OutputStructures>,
}

/// Sparsity reports, feature-frequency tables, structure histograms and
/// DOT graphs of every trained population.
pub fn run_analyze(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let l = layout(config);
    let comments = config.provenance();
    let mut written = Vec::new();
    for &n in &config.data.train_series {
        let dir = l.report_dir(n);
        for spec in &config.models {
            let artifacts = load_group(config, n, spec)?;
            let models: Vec<MlpModel<f64>> = artifacts.iter().map(|a| a.model.network.clone()).collect();

            let reports: Vec<SparsityReport> = models.iter().map(sparsity_report).collect();
            let fractions: Vec<f64> = reports.iter().map(|r| r.pruned_fraction).collect();
            let summary = SparsitySummary {
                provenance: config.provenance_json(),
                model: spec.name.clone(),
                train_series: n,
                dense_matrix_operations: matrix_op_count(&spec.shape),
                mean_pruned_fraction: fractions.iter().sum::<f64>() / fractions.len() as f64,
                min_pruned_fraction: fractions.iter().copied().fold(f64::INFINITY, f64::min),
                replicates: reports.clone(),
            };
            let p = dir.join(format!("{}_sparsity.json", spec.name));
            write_json(&p, &summary)?;
            written.push(p);

            let mut csv = comment_block(&comments, "#");
            csv.push_str("replicate,seed,total_weights,nonzero_weights,pruned_fraction,pruned_neurons\n");
            for (a, r) in artifacts.iter().zip(&reports) {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    a.replicate, a.seed, r.total_weights, r.nonzero_weights, r.pruned_fraction, r.pruned_neurons
                );
            }
            let p = dir.join(format!("{}_sparsity.csv", spec.name));
            write_text(&p, &csv)?;
            written.push(p);

            let table = frequency_table(&models)?;
            let p = dir.join(format!("{}_features.csv", spec.name));
            write_text(&p, &table.to_csv(&comments))?;
            written.push(p);

            let graphs: Vec<_> = models.iter().map(extract_structure).collect();
            let outputs = (0..spec.shape[spec.shape.len() - 1])
                .map(|o| OutputStructures {
                    output: format!("f{}", o + 1),
                    linear_collapse_percent: 100.0
                        * graphs.iter().filter(|g| g.linear_collapse[o]).count() as f64
                        / graphs.len() as f64,
                    structures: structure_histogram(&models, o),
                })
                .collect();
            let p = dir.join(format!("{}_structures.json", spec.name));
            write_json(
                &p,
                &StructureSummary {
                    provenance: config.provenance_json(),
                    model: spec.name.clone(),
                    train_series: n,
                    outputs,
                },
            )?;
            written.push(p);

            for (a, g) in artifacts.iter().zip(&graphs) {
                let p = l.graph(n, &spec.name, a.replicate);
                let mut c = comments.clone();
                c.push(format!("model_seed={}", a.seed));
                write_text(&p, &g.to_dot(&c))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct ForecastArtifact<'a> {
    provenance: serde_json::Value,
    train_series: usize,
    report: &'a ForecastReport,
}

/// Writes the CSV, summary CSV and JSON of one forecast report.
pub fn write_forecast_report(
    dir: &Path,
    report: &ForecastReport,
    config: &ExperimentConfig,
    train_series: usize,
) -> Result<Vec<PathBuf>> {
    let comments = config.provenance();
    let files = [
        (dir.join("forecast.csv"), report.to_csv(&comments)),
        (dir.join("forecast_summary.csv"), report.summary_csv(&comments)),
    ];
    for (p, text) in &files {
        write_text(p, text)?;
    }
    let json = dir.join("forecast.json");
    write_json(
        &json,
        &ForecastArtifact {
            provenance: config.provenance_json(),
            train_series,
            report,
        },
    )?;
    let mut out: Vec<PathBuf> = files.into_iter().map(|(p, _)| p).collect();
    out.push(json);
    Ok(out)
}

/// Rolling-forecast evaluation of every population on the test set, plus
/// plot data and gnuplot scripts.
pub fn run_evaluate(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    if config.data.test_series == 0 {
        return Err(Error::Config("evaluation needs test_series >= 1".into()));
    }
    if config.models.is_empty() {
        return Err(Error::Config("evaluation needs at least one model spec".into()));
    }
    let l = layout(config);
    let comments = config.provenance();
    let tests = load_series((0..config.data.test_series).map(|i| l.test_series(i)), config.simulator.dt)?;
    let horizons = &config.evaluation.horizons;
    let band_n = horizons.iter().copied().max().unwrap_or(config.data.test_steps);
    let mut written = Vec::new();
    let mut overall = comment_block(&comments, "#");
    overall.push_str("train_series,horizon,group,models,median,min,max,diverged_models\n");

    for &n in &config.data.train_series {
        let dir = l.report_dir(n);
        let populations: Vec<Vec<TrainedModel<f64>>> = config
            .models
            .iter()
            .map(|s| Ok(load_group(config, n, s)?.into_iter().map(|a| a.model).collect()))
            .collect::<Result<_>>()?;
        let groups: Vec<ModelGroup<'_, TrainedModel<f64>>> = config
            .models
            .iter()
            .zip(&populations)
            .map(|(s, m)| ModelGroup {
                name: s.name.clone(),
                models: m,
            })
            .collect();
        let train_std = populations[0][0].normalization.state_std();
        let report = evaluate_population(&groups, &tests, horizons, &train_std)?;
        written.extend(write_forecast_report(&dir, &report, config, n)?);

        for h in &report.horizons {
            for g in &h.groups {
                let _ = writeln!(
                    overall,
                    "{n},{},{},{},{:e},{:e},{:e},{}",
                    h.horizon, g.name, g.models, g.median, g.min, g.max, g.diverged_models
                );
            }
        }

        for (spec, models) in config.models.iter().zip(&populations) {
            let series = &tests[config.evaluation.band_series];
            let p = dir.join(format!("bands_{}.csv", spec.name));
            let mut c = comments.clone();
            c.push(format!("test_series={}", config.evaluation.band_series));
            write_text(&p, &forecast_bands(models, series, band_n.min(series.steps()), &c)?)?;
            written.push(p);
        }

        // Bar-plot data: one file per group with median/min/max per horizon.
        for (g, name) in report.group_names.iter().enumerate() {
            let mut dat = comment_block(&comments, "#");
            dat.push_str("# horizon median min max\n");
            for h in &report.horizons {
                let s = &h.groups[g];
                let _ = writeln!(dat, "{} {:e} {:e} {:e}", h.horizon, s.median, s.min, s.max);
            }
            let p = l.plot_dir().join(format!("anrfmse_n{n:02}_{name}.dat"));
            write_text(&p, &dat)?;
            written.push(p);
        }
    }
    let p = l.root.join("reports/forecast_summary.csv");
    write_text(&p, &overall)?;
    written.push(p);
    written.extend(write_plot_scripts(config, &l)?);
    Ok(written)
}

fn write_plot_scripts(config: &ExperimentConfig, l: &Layout) -> Result<Vec<PathBuf>> {
    let comments = comment_block(&config.provenance(), "#");
    let names: Vec<&str> = config.models.iter().map(|m| m.name.as_str()).collect();
    let mut written = Vec::new();
    for &n in &config.data.train_series {
        let mut gp = comments.clone();
        let _ = write!(
            gp,
            "set terminal pngcairo size 900,600\n\
             set output 'anrfmse_n{n:02}.png'\n\
             set logscale y\n\
             set xlabel 'horizon [steps]'\n\
             set ylabel 'AN-RFMSE'\n\
             set key top left\n\
             plot for [g in \"{}\"] sprintf('anrfmse_n{n:02}_%s.dat', g) using 1:2:3:4 with yerrorlines title g\n",
            names.join(" ")
        );
        let p = l.plot_dir().join(format!("anrfmse_n{n:02}.gp"));
        write_text(&p, &gp)?;
        written.push(p);

        let mut gp = comments.clone();
        let _ = write!(
            gp,
            "set terminal pngcairo size 1400,1000\n\
             set output 'bands_n{n:02}.png'\n\
             set datafile separator ','\n\
             set key autotitle columnhead\n\
             set multiplot layout 4,2\n\
             do for [i=0:7] {{\n\
             \x20 set title sprintf('x%d', i + 1)\n\
             \x20 plot for [g in \"{}\"] sprintf('../reports/n{n:02}/bands_%s.csv', g) \
             using 1:(column(4 + 3 * i) - column(5 + 3 * i)):(column(4 + 3 * i) + column(5 + 3 * i)) \
             with filledcurves fs transparent solid 0.3 title g, \
             sprintf('../reports/n{n:02}/bands_%s.csv', word(\"{}\", 1)) using 1:(column(3 + 3 * i)) with lines lw 2 title 'truth'\n\
             }}\n\
             unset multiplot\n",
            names.join(" "),
            names.join(" ")
        );
        let p = l.plot_dir().join(format!("bands_n{n:02}.gp"));
        write_text(&p, &gp)?;
        written.push(p);
    }
    Ok(written)
}

/// Runs all stages in order.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = run_simulate(config)?;
    written.extend(run_train(config)?);
    written.extend(run_analyze(config)?);
    written.extend(run_evaluate(config)?);
    Ok(written)
}
