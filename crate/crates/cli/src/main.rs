//! `mrp`: simulation study, model fitting, post-stratification, annotation
//! and agreement diagnostics from the command line.

mod commands;
mod config;
#[cfg(feature = "live")]
mod live;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit statuses.
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// A mistake in how the command was invoked.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// The sampler or a model evaluation broke down.
#[derive(Debug)]
pub struct Numeric(pub String);

impl std::fmt::Display for Numeric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numeric {}

#[derive(Parser)]
#[command(name = "mrp", version, about = "Bias-corrected structured MrP")]
struct Cli {
    /// Flat key-value TOML file (or an earlier manifest.json); flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study.
    Simulate(commands::simulate::Args),
    /// Fit the multilevel model to a survey.
    Fit(commands::fit::Args),
    /// Turn fitted draws into estimates over a frame margin.
    Poststratify(commands::poststratify::Args),
    /// Annotate users through a chat-completion endpoint or fixtures.
    Annotate(commands::annotate::Args),
    /// Krippendorff's alpha and the agreement network.
    Agreement(commands::agreement::Args),
    /// Uniform-swing baseline.
    Swing(commands::swing::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use mrp_core::model::ModelError;
    use mrp_core::sampler::SamplerError;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<Numeric>() {
            return EXIT_NUMERIC;
        }
        if let Some(SamplerError::AllDivergent { .. }) = cause.downcast_ref::<SamplerError>() {
            return EXIT_NUMERIC;
        }
        if let Some(ModelError::NonFinite { .. } | ModelError::Sampler(SamplerError::AllDivergent { .. })) =
            cause.downcast_ref::<ModelError>()
        {
            return EXIT_NUMERIC;
        }
        if let Some(mrp_core::simstudy::SimError::UnknownScenario(_)) = cause.downcast_ref() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = cli.config.as_deref();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a, cfg),
        Command::Fit(a) => commands::fit::run(a, cfg),
        Command::Poststratify(a) => commands::poststratify::run(a, cfg),
        Command::Annotate(a) => commands::annotate::run(a, cfg),
        Command::Agreement(a) => commands::agreement::run(a, cfg),
        Command::Swing(a) => commands::swing::run(a, cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
