//! Command-line experiment runner for the `interlace` library.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use interlace::Error;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{write_report, Format, Header};

/// Exit status for invalid input: usage, configuration or scene errors.
pub const EXIT_INVALID: i32 = 2;
/// Exit status for unreadable inputs or unwritable outputs.
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "interlace",
    version,
    about = "Random interlacements on two distant sets"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of replicas, overriding the configuration.
    #[arg(long, global = true)]
    pub replicas: Option<u64>,
    /// Worker threads (0 for all cores); never changes the outputs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium measure, capacities, escape probabilities and mean counts.
    Potential,
    /// Independent samples of one process.
    Sample {
        #[arg(value_enum)]
        process: Process,
    },
    /// Coupled pairs and the coupling failure estimate.
    Couple,
    /// Experiment reports.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Process {
    Ri,
    Ns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Scaling,
    Covariance,
    Lemmas,
    Tv,
}

impl Command {
    fn label(&self) -> String {
        match self {
            Command::Potential => "potential".into(),
            Command::Sample { process } => {
                format!("sample-{}", process.to_possible_value().unwrap().get_name())
            }
            Command::Couple => "couple".into(),
            Command::Experiment { name } => format!(
                "experiment-{}",
                name.to_possible_value().unwrap().get_name()
            ),
        }
    }
}

fn fail(code: i32, kind: &str, message: String, invariant: Option<&str>) -> i32 {
    let mut v = json!({ "error": kind, "message": message });
    if let Some(i) = invariant {
        v["invariant"] = json!(i);
    }
    eprintln!("{v}");
    code
}

fn fail_with(e: &Error) -> i32 {
    let invariant = match e {
        Error::InvalidConfiguration { invariant, .. } => Some(*invariant),
        _ => None,
    };
    let code = if matches!(e, Error::Io(_)) {
        EXIT_IO
    } else {
        EXIT_INVALID
    };
    fail(code, e.kind(), e.to_string(), invariant)
}

/// Loads the configuration and applies the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.engine.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.engine.replicas = r;
    }
    if let Some(t) = cli.threads {
        cfg.engine.threads = t;
    }
    if cfg.engine.replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be positive".into()));
    }
    Ok(cfg)
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return fail(
                EXIT_INVALID,
                "usage",
                e.to_string().trim().to_string(),
                None,
            );
        }
    };
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail_with(&e),
    };
    let report = match commands::execute(&cli.command, &cfg) {
        Ok(r) => r,
        Err(e) => return fail_with(&e),
    };
    let header = Header::new(&cli.command.label(), cfg.hash(), cfg.engine.seed);
    match write_report(&cli.out, &header, cli.format, &report) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => fail_with(&e),
    }
}
