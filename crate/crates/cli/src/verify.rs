use std::path::PathBuf;

use anyhow::Result;
use tfe_core::verify::{verify, Suite, VerifyOptions};

#[derive(clap::Args)]
pub struct Args {
    /// Suites to run (repeatable): chunking, cache, decoder, prior. Runs all when omitted.
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Mutation check: leave permuted decoder labels unmapped.
    #[arg(long, hide = true)]
    inject_skip_label_unpermute: bool,
}

pub fn run(a: Args) -> Result<()> {
    let suites = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites.iter().map(|s| s.parse()).collect::<tfe_core::Result<Vec<Suite>>>()?
    };
    let report = verify(&suites, VerifyOptions { skip_label_unpermute: a.inject_skip_label_unpermute })?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &a.report {
        std::fs::write(p, &json)?;
    }
    println!("{json}");
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {}/{}: measured {} (tolerance {})", c.suite, c.name, c.measured, c.tolerance);
    }
    if report.passed {
        Ok(())
    } else {
        Err(crate::VerificationFailed.into())
    }
}
