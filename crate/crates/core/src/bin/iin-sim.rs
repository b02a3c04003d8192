//! Scenario runner for the identity plane simulator.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 configuration error, 3 runtime error.

use clap::{Parser, Subcommand};
use iin_core::harness::{self, load_scenario, parse_scenario, run_scenario, ScenarioConfig};
use iin_core::trace::{verify_trace, TraceError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "iin-sim", version, about = "Deterministic interop identity simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or the name of a bundled scenario).
    Run {
        #[arg(long)]
        scenario: String,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Overrides the scenario's tick ceiling.
        #[arg(long)]
        ticks: Option<u64>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a bundled demonstration.
    Demo {
        #[arg(value_parser = ["two-network"])]
        name: String,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a JSONL trace against the trace invariants.
    VerifyTrace { file: PathBuf },
    /// List bundled scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, trace, ticks, json } => match resolve(&scenario) {
            Ok(config) => execute(&config, seed, ticks, trace.as_deref(), json),
            Err(code) => code,
        },
        Command::Demo { name, trace } => {
            let config = parse_scenario(harness::bundled(&name).expect("bundled")).expect("bundled scenario parses");
            execute(&config, None, None, trace.as_deref(), false)
        }
        Command::VerifyTrace { file } => match verify_trace(&file) {
            Ok(n) => {
                println!("{}: {n} events, all invariants hold", file.display());
                ExitCode::SUCCESS
            }
            Err(e @ TraceError::TraceInvariantViolation { .. }) => {
                eprintln!("{}: {e}", file.display());
                ExitCode::from(EXIT_ASSERTION)
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::ListScenarios => {
            for (name, text) in harness::BUNDLED {
                let description = parse_scenario(text).map(|c| c.description).unwrap_or_default();
                println!("{name:<20} {description}");
            }
            ExitCode::SUCCESS
        }
    }
}

fn resolve(scenario: &str) -> Result<ScenarioConfig, ExitCode> {
    let path = Path::new(scenario);
    let loaded = if !path.exists() {
        match harness::bundled(scenario) {
            Some(text) => parse_scenario(text),
            None => load_scenario(path),
        }
    } else {
        load_scenario(path)
    };
    loaded.map_err(|errors| {
        eprintln!("{scenario}: configuration invalid");
        for e in &errors.0 {
            eprintln!("  {e}");
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn execute(config: &ScenarioConfig, seed: Option<u64>, ticks: Option<u64>, trace: Option<&Path>, json: bool) -> ExitCode {
    let (report, world) = match run_scenario(config, seed, ticks) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("bootstrap failed: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    if let Some(path) = trace {
        if let Err(e) = world.trace.write(path) {
            eprintln!("cannot write trace to {}: {e}", path.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.summary());
    }
    if !report.errors.is_empty() {
        ExitCode::from(EXIT_RUNTIME)
    } else if !report.passed() {
        ExitCode::from(EXIT_ASSERTION)
    } else {
        ExitCode::SUCCESS
    }
}
