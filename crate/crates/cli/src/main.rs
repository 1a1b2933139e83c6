//! `selfdual`: run configured scenarios and property batteries.
//!
//! Exit status: 0 when every check passes, 1 when a run finishes but a check
//! fails (artifacts are still written), 2 for an invalid config or an
//! unknown suite (nothing is written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use selfdual_core::scenario::{load_config, run, write_artifacts, Check};
use selfdual_core::verify::{run_suite, SUITES};
use selfdual_core::Error;

#[derive(Parser)]
#[command(name = "selfdual", version, about = "Selfdual variational solvers for Navier-Stokes on the torus")]
struct Cli {
    /// directory for run artifacts (overrides the config's output_dir)
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// run seed (overrides the config's seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config
    Solve { config: PathBuf },
    /// Run a property battery: duality, boundary, fields, gradients or refinement
    Verify { suite: String },
}

fn print_table(rows: &[Check]) {
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(4).max(5);
    println!("{:<width$}  {:>12}  {:>12}  result", "check", "value", "threshold");
    for r in rows {
        println!(
            "{:<width$}  {:>12.4e}  {:>12.4e}  {}",
            r.name,
            r.value,
            r.threshold,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
}

fn solve(config: PathBuf, output_dir: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let mut cfg = match load_config(&config) {
        Ok(cfg) => cfg,
        Err(Error::Io(e)) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = output_dir
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("selfdual-out"));
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: run failed: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_artifacts(&outcome, &dir) {
        eprintln!("error: writing artifacts to {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    let s = &outcome.report.solve;
    println!(
        "{:?}: {} iterations, termination {:?}, artifacts in {}",
        outcome.report.scenario,
        s.iterations,
        s.termination,
        dir.display()
    );
    print_table(&outcome.report.checks);
    if outcome.report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn verify(suite: &str) -> ExitCode {
    if !SUITES.contains(&suite) {
        eprintln!("error: unknown suite {suite:?}; expected one of {}", SUITES.join(", "));
        return ExitCode::from(2);
    }
    match run_suite(suite) {
        Ok(rows) => {
            print_table(&rows);
            if rows.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config } => solve(config, cli.output_dir, cli.seed),
        Command::Verify { suite } => verify(&suite),
    }
}
