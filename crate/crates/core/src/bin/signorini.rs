//! Command line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use signorini::cli::{self, config::OUTPUT_DIR_ENV, CliError, RunOutcome};

#[derive(Parser)]
#[command(name = "signorini", version, about = "Thin obstacle problem with a clamped fixed boundary")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured scenario and analyze the solution.
    Run {
        /// Config file, or the name of a shipped preset.
        config: PathBuf,
    },
    /// Analyze the field named in the config's [input] section without solving.
    Verify { config: PathBuf },
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

fn report(outcome: &RunOutcome) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for v in &outcome.summary.verdicts {
        println!(
            "{:<15} {}  margin {:>10.3e}  {}",
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            v.margin,
            v.detail
        );
    }
    println!("artifacts in {}", outcome.output_dir.display());
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Presets { name: None } => {
            for (name, description, _) in cli::PRESETS {
                println!("{name:<10} {description}");
            }
            Ok(cli::EXIT_PASS)
        }
        Command::Presets { name: Some(name) } => {
            let (_, text) = cli::preset(&name).ok_or_else(|| CliError::Usage(format!("no preset named {name:?}")))?;
            print!("{text}");
            Ok(cli::EXIT_PASS)
        }
        Command::Run { config } => {
            let config = cli::load_config(&config)?;
            let outcome = cli::run(&config)?;
            if let Some(s) = &outcome.summary.solve {
                println!(
                    "solved in {} sweeps, energy {:.10}, last update {:.2e}",
                    s.iterations, s.energy, s.final_update
                );
            }
            report(&outcome);
            Ok(outcome.exit_code())
        }
        Command::Verify { config } => {
            let config = cli::load_config(&config)?;
            let outcome = cli::verify(&config)?;
            report(&outcome);
            Ok(outcome.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match execute(args.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Output(_)) {
                eprintln!("(set {OUTPUT_DIR_ENV} to write elsewhere)");
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
