mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcurve::harness::Estimator;
use lcurve::ModelKind;

use crate::error::CliError;

const DEFAULT_SEED: u64 = 20240101;

#[derive(Parser, Debug)]
#[command(name = "lcurve", version, about = "Learning-curve estimation for logistic regression")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Oracle learning curves for known generative scenarios.
    Truth(ConfigArgs),
    /// Monte-Carlo study of BRIE and SUBEX against oracle truths.
    Simulate(ConfigArgs),
    /// Estimate the learning curve of a dataset.
    Estimate(EstimateArgs),
    /// Repeat a run from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (default: the manifest's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Used when the config has no `seed` key.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Name of the 0/1 label column.
    #[arg(long)]
    label: String,
    #[arg(long, default_value = "mvn-full")]
    model: ModelKind,
    /// Binary feature columns by name (required for `gm`).
    #[arg(long, value_delimiter = ',')]
    binary_cols: Vec<String>,
    /// Training sizes, e.g. `100,200` or `50:200:25`.
    #[arg(long)]
    sizes: String,
    #[arg(long = "B", default_value_t = lcurve::impint::DEFAULT_B)]
    b: usize,
    #[arg(long = "N", default_value_t = lcurve::impint::DEFAULT_N)]
    n_test: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "brie")]
    estimators: Vec<Estimator>,
    #[arg(long, default_value_t = lcurve::subex::DEFAULT_DRAWS)]
    subex_draws: usize,
    /// Also run the subsampling study at the requested sizes not above n.
    #[arg(long)]
    self_study: bool,
    #[arg(long, default_value_t = 100)]
    self_study_reps: usize,
    /// Accept p >= n.
    #[arg(long)]
    allow_ill_posed: bool,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    match cli.command {
        Command::Truth(a) => {
            let text = read_config(&a.config)?;
            commands::execute(manifest::Resolved::Truth(config::truth_config(&text, a.seed)?), &a.out)
        }
        Command::Simulate(a) => {
            let text = read_config(&a.config)?;
            commands::execute(manifest::Resolved::Simulate(config::study_config(&text, a.seed)?), &a.out)
        }
        Command::Estimate(a) => {
            let data = std::fs::canonicalize(&a.data).map_err(|e| CliError::Data(format!("{}: {e}", a.data.display())))?;
            let sizes = config::parse_sizes(&a.sizes).map_err(|m| CliError::config(0, "--sizes", m))?;
            let cfg = manifest::EstimateConfig {
                data,
                label: a.label,
                model: a.model,
                binary_cols: a.binary_cols,
                sizes,
                b: a.b,
                n_test: a.n_test,
                master_seed: a.seed,
                estimators: a.estimators,
                subex_draws: a.subex_draws,
                self_study: a.self_study,
                self_study_reps: a.self_study_reps,
                allow_ill_posed: a.allow_ill_posed,
            };
            commands::execute(manifest::Resolved::Estimate(cfg), &a.out)
        }
        Command::Replay { manifest: path, out } => {
            let m = manifest::RunManifest::read(&path)?;
            let dir = match out {
                Some(d) => d,
                None => path.parent().map(PathBuf::from).unwrap_or_default(),
            };
            commands::execute(m.config, &dir)
        }
    }
}

fn read_config(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(0, path.display().to_string(), e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
