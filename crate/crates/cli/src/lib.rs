//! Command-line front end: parses arguments, resolves the run configuration
//! and dispatches to the estimation pipeline.
//!
//! Exit codes: 0 on success, 1 when a computation or output step fails, 2 on
//! configuration and input errors.

mod commands;
pub mod config;
pub mod error;
mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Command, Settings, CONFIG_ENV};
pub use error::CliError;

const AFTER_HELP: &str = "\
Settings come from built-in defaults, then the config file (--config, or the \
path in NOWCAST_CONFIG), then flags. Any setting can be given as --set KEY=VALUE.";

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "High-dimensional MIDAS nowcasting, inference and tensor factor tools")]
#[command(after_help = AFTER_HELP)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for cross-validation folds and Monte Carlo draws.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Directory for result tables and the manifest.
    #[arg(short, long, global = true, value_name = "DIR", default_value = "nowcast-out")]
    output: PathBuf,
    /// Override a setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Input CSV.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Fit a sparse-group LASSO MIDAS regression.
    Fit(DataArg),
    /// Fit on the information set at a date and predict the unreleased target.
    Nowcast {
        #[command(flatten)]
        data: DataArg,
        /// Information-set date, ISO-8601.
        #[arg(long, value_name = "DATE")]
        as_of: Option<String>,
    },
    /// Cross-validate the penalty level with a gap.
    Cv(DataArg),
    /// Debiased Granger causality test for covariate groups.
    Granger {
        #[command(flatten)]
        data: DataArg,
        /// Comma-separated groups to test.
        #[arg(long)]
        tested: Option<String>,
    },
    /// Cost-sensitive weighted logistic classification.
    Classify {
        #[command(flatten)]
        data: DataArg,
        /// Label column.
        #[arg(long)]
        label: Option<String>,
    },
    /// Eigenvalue-ratio test for the number of tensor factors.
    TensorRank {
        #[command(flatten)]
        data: DataArg,
        /// Number of factors under the null.
        #[arg(long)]
        k: Option<usize>,
    },
}

impl Sub {
    fn split(&self) -> (Command, &DataArg, Vec<(&'static str, String)>) {
        match self {
            Sub::Fit(d) => (Command::Fit, d, vec![]),
            Sub::Nowcast { data, as_of } => (Command::Nowcast, data, opt("as_of", as_of)),
            Sub::Cv(d) => (Command::Cv, d, vec![]),
            Sub::Granger { data, tested } => (Command::Granger, data, opt("tested", tested)),
            Sub::Classify { data, label } => (Command::Classify, data, opt("label", label)),
            Sub::TensorRank { data, k } => {
                (Command::TensorRank, data, k.map(|k| ("k", k.to_string())).into_iter().collect())
            }
        }
    }
}

fn opt(key: &'static str, v: &Option<String>) -> Vec<(&'static str, String)> {
    v.iter().map(|v| (key, v.clone())).collect()
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let (command, data, flags) = cli.command.split();
    let mut overrides = BTreeMap::new();
    for s in &cli.set {
        let (k, v) = config::parse_override(s)?;
        overrides.insert(k, v);
    }
    if let Some(p) = &data.data {
        overrides.insert("data".to_string(), p.display().to_string());
    }
    for (k, v) in flags {
        overrides.insert(k.to_string(), v);
    }
    if let Some(seed) = cli.seed {
        overrides.insert("seed".to_string(), seed.to_string());
    }
    let config_file = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let settings = Settings::resolve(command, config_file.as_deref(), &overrides)?;
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    log::info!("running `{command}` with {} thread(s)", cli.threads);
    pool.install(|| commands::dispatch(&settings, &cli.output))
}
