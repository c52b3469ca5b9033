use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmarl_cli::config::ExperimentConfig;
use cmarl_cli::validate::validate;
use cmarl_cli::{run, summarize};

#[derive(Parser)]
#[command(name = "cmarl", version, about = "Consensus multi-agent Volt-VAR control experiments")]
struct Cli {
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Runs only this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Median and min/max bands across finished runs.
    Summarize {
        /// Experiment or seed directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

const VALIDATION_FAILURE: u8 = 1;
const RUNTIME_FAILURE: u8 = 2;

fn base_dir(config: &Path) -> PathBuf {
    let dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
    std::path::absolute(&dir).unwrap_or(dir)
}

/// Parses and validates; prints findings and returns `None` when invalid.
fn load(path: &Path) -> Option<ExperimentConfig> {
    let config = match ExperimentConfig::from_file(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return None;
        }
    };
    let findings = validate(&config, &base_dir(path));
    for f in &findings {
        eprintln!("{}: {f}", path.display());
    }
    findings.is_empty().then_some(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Some(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            None => ExitCode::from(VALIDATION_FAILURE),
        },
        Command::Run { config: path, output, seed } => {
            let Some(mut config) = load(&path) else {
                return ExitCode::from(VALIDATION_FAILURE);
            };
            if let Some(o) = output {
                let o = std::path::absolute(&o).unwrap_or(o);
                config.experiment.output_dir = o.to_string_lossy().into_owned();
            }
            if let Some(s) = seed {
                config.experiment.seeds = vec![s];
            }
            let resolved = config.resolve(&base_dir(&path)).expect("validated config resolves");
            if let Some(m) = &resolved.manifest {
                if m.version != cmarl_vvc::VERSION {
                    log::warn!("manifest was written by version {}, running {}", m.version, cmarl_vvc::VERSION);
                }
            }
            let outcome = run::run(&resolved);
            for d in &outcome.completed {
                println!("{}", d.display());
            }
            for (s, msg) in &outcome.failed {
                eprintln!("seed {s} failed: {msg}");
            }
            if outcome.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(RUNTIME_FAILURE)
            }
        }
        Command::Summarize { runs, output } => match summarize::summarize(&runs, &output) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e:#}");
                ExitCode::from(RUNTIME_FAILURE)
            }
        },
    }
}
