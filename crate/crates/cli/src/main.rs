//! `vnlab`: verifications, sweeps, separability checks and dataset
//! arithmetic. Exit codes: 0 pass, 1 usage or input error, 2 verification
//! failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;
use report::Report;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Library(vnlab::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Library(e) => write!(f, "{e}"),
        }
    }
}

impl From<vnlab::Error> for CliError {
    fn from(e: vnlab::Error) -> Self {
        CliError::Library(e)
    }
}

#[derive(Parser)]
#[command(name = "vnlab", version, about = "MPNN + virtual node attention constructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
    /// Directory for `<command>.json` and CSV tables.
    #[arg(long, env = "VNLAB_REPORT_DIR")]
    report_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compiled DeepSets layers and networks against direct evaluation.
    VerifyDeepsets(Common),
    /// Kernelised attention programs against direct evaluation.
    VerifyPerformer(Common),
    /// Full attention by sequential selection: oracle, softmax and GATv2.
    VerifyDeep(Common),
    /// Per-point separability of a CSV point set.
    CheckSeparability {
        /// CSV file, one point per row, optional header.
        points: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Calendar days and window counts of the dataset splits.
    DatasetArith(Common),
}

fn configure(common: &Common, defaults: &[(&str, &str)]) -> Result<Config, CliError> {
    let mut cfg = Config::new(defaults);
    if let Some(path) = &common.config {
        cfg.load_file(path)?;
    }
    for pair in &common.set {
        cfg.assign(pair)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(Report, Common), CliError> {
    match cli.command {
        Command::VerifyDeepsets(c) => {
            let cfg = configure(&c, commands::DEEPSETS_DEFAULTS)?;
            Ok((commands::verify_deepsets(&cfg)?, c))
        }
        Command::VerifyPerformer(c) => {
            let cfg = configure(&c, commands::PERFORMER_DEFAULTS)?;
            Ok((commands::verify_performer(&cfg)?, c))
        }
        Command::VerifyDeep(c) => {
            let cfg = configure(&c, commands::DEEP_DEFAULTS)?;
            Ok((commands::verify_deep(&cfg)?, c))
        }
        Command::CheckSeparability { points, common } => {
            let cfg = configure(&common, commands::SEPARABILITY_DEFAULTS)?;
            Ok((commands::check_separability(&points, &cfg)?, common))
        }
        Command::DatasetArith(c) => {
            let cfg = configure(&c, commands::DATASET_DEFAULTS)?;
            Ok((commands::dataset_arith(&cfg)?, c))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (report, common) = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = &common.report_dir {
        if let Err(e) = report.write_to(dir) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if common.json {
        println!("{}", report.to_json());
    } else {
        for l in &report.lines {
            println!("{l}");
        }
        println!("{}", if report.passed { "PASS" } else { "FAIL" });
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
