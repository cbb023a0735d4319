//! `tfe`: dataset generation, prediction, invariant verification and
//! benchmarking for the tabular in-context learning engine.

mod bench;
mod generate;
mod predict;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tfe", version, about = "Tabular in-context learning engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample synthetic datasets from the SCM prior.
    Generate(generate::Args),
    /// Predict the test rows of a dataset.
    Predict(predict::Args),
    /// Run invariant suites and write a JSON report.
    Verify(verify::Args),
    /// Time and measure forward, chunked, cached and cache-build calls.
    Bench(bench::Args),
}

/// Returned by `verify` when a check fails.
#[derive(Debug, thiserror::Error)]
#[error("verification failed")]
pub struct VerificationFailed;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 4;
    }
    match err.downcast_ref::<tfe_core::Error>() {
        Some(
            tfe_core::Error::UnsupportedClassCount { .. }
            | tfe_core::Error::Dimension(_)
            | tfe_core::Error::EmptyInput(_)
            | tfe_core::Error::EmptyContext
            | tfe_core::Error::Column(_)
            | tfe_core::Error::CacheMismatch(_),
        ) => 3,
        _ => 2,
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("TFE_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("TFE_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = init_threads().and_then(|_| match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Bench(a) => bench::run(a),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
