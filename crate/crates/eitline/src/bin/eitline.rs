use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use eitline::scenario::{bundled_scenario, run_scenario, Scenario, BUNDLED_SCENARIOS};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "eitline", about = "EIT delay-line channel simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name).
    Run {
        /// Path to a scenario TOML file, or a bundled scenario name.
        scenario: String,
        /// Output directory for CSV curves and the manifest.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the Monte-Carlo trial count.
        #[arg(long)]
        trials: Option<u64>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and validate a scenario file without running it.
    Validate {
        scenario: String,
    },
    /// List the bundled scenarios.
    ListScenarios,
}

fn load_scenario(spec: &str) -> Result<Scenario, eitline::Error> {
    let path = Path::new(spec);
    if path.exists() {
        Scenario::from_file(path)
    } else if let Some(result) = bundled_scenario(spec) {
        result
    } else {
        Err(eitline::Error::Config(format!(
            "`{spec}` is neither a file nor a bundled scenario (try `eitline list-scenarios`)"
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios => {
            for (name, _) in BUNDLED_SCENARIOS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(s) => {
                println!("ok: scenario `{}` ({:?})", s.name, s.kind);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { scenario, out, seed, trials, quiet } => {
            let mut s = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(seed) = seed {
                s.monte_carlo.seed = seed;
            }
            if let Some(trials) = trials {
                s.monte_carlo.trials = trials;
            }
            if let Err(e) = s.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            match run_scenario(&s, &out) {
                Ok(report) => {
                    if !quiet {
                        for f in &report.files {
                            println!("wrote {}", out.join(f).display());
                        }
                        for (k, v) in &report.results {
                            println!("{k} = {v}");
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
