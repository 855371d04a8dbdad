//! Command-line driver for the cell identification experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use cellsysid::analysis::{region_bounds, region_bounds_for_shape, RegionBounds};
use cellsysid::experiment::{run_all, run_analyze, run_evaluate, run_simulate, run_train, ExperimentConfig};
use cellsysid::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cellsysid", version, about = "Sparse neural system identification of an aluminum electrolysis cell")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the training pool and the test set.
    Simulate,
    /// Train all model populations on the simulated data.
    Train,
    /// Sparsity, feature-frequency and structure reports of trained models.
    Analyze,
    /// Rolling-forecast evaluation of trained models on the test set.
    Evaluate,
    /// Simulate, train, analyze and evaluate in one go.
    Run,
    /// Print linear-region bounds for a network shape.
    Regions(RegionArgs),
}

#[derive(Args, Debug)]
struct RegionArgs {
    /// Layer widths, e.g. 13,6,6,6,8 (hidden layers must be equally wide).
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["d", "n", "layers"])]
    shape: Option<Vec<usize>>,
    /// Input dimension.
    #[arg(short, long, requires_all = ["n", "layers"])]
    d: Option<usize>,
    /// Neurons per hidden layer.
    #[arg(short, long)]
    n: Option<usize>,
    /// Number of hidden layers.
    #[arg(short = 'L', long)]
    layers: Option<usize>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_config() {
        2
    } else if err.is_divergence() {
        3
    } else {
        match err {
            Error::Io { .. } | Error::MissingArtifact(_) | Error::Csv(_) | Error::Json(_) => 4,
            _ => 1,
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_bounds(b: &RegionBounds) {
    println!("d={} n={} L={}", b.d, b.n, b.hidden_layers);
    let show = |label: &str, v: Result<f64, Error>, log10: f64| match v {
        Ok(v) => println!("{label}: {v:e} (log10 = {log10:.6})"),
        Err(_) => println!("{label}: overflow (log10 = {log10:.6})"),
    };
    show("upper", b.upper(), b.log10_upper());
    show("lower", b.lower(), b.log10_lower());
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Command::Regions(args) = &cli.command {
        let bounds = match (&args.shape, args.d, args.n, args.layers) {
            (Some(shape), ..) => region_bounds_for_shape(shape)?,
            (None, Some(d), Some(n), Some(l)) => region_bounds(d, n, l)?,
            _ => {
                return Err(Error::InvalidArgument(
                    "regions needs --shape or all of -d, -n and -L".into(),
                ))
            }
        };
        print_bounds(&bounds);
        return Ok(());
    }

    let config = load_config(&cli.common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let stage = match cli.command {
        Command::Simulate => run_simulate,
        Command::Train => run_train,
        Command::Analyze => run_analyze,
        Command::Evaluate => run_evaluate,
        Command::Run => run_all,
        Command::Regions(_) => unreachable!("handled above"),
    };
    let written = pool.install(|| stage(&config))?;
    println!(
        "wrote {} artifacts under {} (config_sha256={}, seed={})",
        written.len(),
        config.output_dir.display(),
        config.hash(),
        config.seed
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
