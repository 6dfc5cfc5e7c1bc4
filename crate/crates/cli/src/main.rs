//! `dosebounds`: sensitivity analysis for matched pairs with treatment doses.

mod run;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dosebounds::Error;
use serde_json::json;

use run::Command;
use settings::Settings;

#[derive(Parser)]
#[command(
    name = "dosebounds",
    version,
    about = "Sensitivity analysis for matched pairs with treatment doses"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Cmd {
    /// Worst-case p-values of the sharp null of no effect.
    Analyze,
    /// Confidence interval for a constant effect by test inversion.
    Ci,
    /// Design sensitivity of a test under a data-generating process.
    DesignSens,
    /// Bahadur efficiency slope of a test under a data-generating process.
    Bahadur,
    /// Worst-case test or confidence set for the effect ratio.
    WeakNull,
    /// Simulated power over a grid of Γ̄.
    PowerSim,
}

impl From<&Cmd> for Command {
    fn from(c: &Cmd) -> Self {
        match c {
            Cmd::Analyze => Command::Analyze,
            Cmd::Ci => Command::Ci,
            Cmd::DesignSens => Command::DesignSens,
            Cmd::Bahadur => Command::Bahadur,
            Cmd::WeakNull => Command::WeakNull,
            Cmd::PowerSim => Command::PowerSim,
        }
    }
}

fn execute(cmd: Command, flags: Settings) -> dosebounds::Result<()> {
    let s = run::resolve(cmd, flags)?;
    if let Some(n) = s.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let output = s.output.clone();
    let outcome = run::run(cmd, s)?;
    run::emit(&outcome, output.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(&cli.command);
    match execute(cmd, cli.settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "code": e.code(), "message": e.to_string() } });
            eprintln!("{body}");
            if matches!(e, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
