use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use complab_core::scenario::{
    builtin_scenario, list_scenarios, run_with_threads, threads_from_env, write_outputs, ScenarioConfig,
};
use complab_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "complab", version, about = "Numerical completeness experiments for flows, trajectories and geodesics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a builtin scenario name) and write report.json plus trajectory CSVs.
    Run {
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Override the integration horizon.
        #[arg(long)]
        horizon: Option<f64>,
        /// Override the relative tolerance.
        #[arg(long = "rel-tol")]
        rel_tol: Option<f64>,
    },
    /// List builtin scenarios.
    ListScenarios,
    /// Print the configuration of a builtin scenario.
    Describe { name: String },
}

fn load(config: &str) -> Result<ScenarioConfig, Error> {
    let path = Path::new(config);
    if path.exists() {
        ScenarioConfig::from_file(path)
    } else if list_scenarios().iter().any(|(n, _)| *n == config) {
        builtin_scenario(config)
    } else {
        Err(Error::config("/", format!("no such file or builtin scenario: {config}")))
    }
}

fn run(config: &str, out: &Path, horizon: Option<f64>, rel_tol: Option<f64>) -> ExitCode {
    let mut cfg = match load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(h) = horizon {
        cfg.run.horizon = h;
    }
    if let Some(r) = rel_tol {
        cfg.run.rel_tol = r;
    }
    let threads = match threads_from_env().and_then(|t| cfg.validate().map(|_| t)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (outcome, used) = match run_with_threads(&cfg, threads) {
        Ok(r) => r,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    if let Err(e) = write_outputs(&outcome, out, used) {
        eprintln!("error: cannot write results: {e}");
        return ExitCode::from(EXIT_NUMERIC);
    }
    let report = &outcome.report;
    for ic in &report.initial_conditions {
        let escape = ic
            .escape_estimate
            .map(|e| format!(" t* = {} ± {:.1e}", e.t_star, e.uncertainty))
            .unwrap_or_default();
        println!("[{}] {}{}", ic.index, ic.verdict.as_str(), escape);
        if let Some(err) = &ic.error {
            println!("    error: {err}");
        }
    }
    for c in &report.global_checks {
        println!("check {}: {}", c.name, if c.passed { "pass" } else { "fail" });
    }
    println!("wrote {}", out.join("report.json").display());
    if report.numeric_failure {
        ExitCode::from(EXIT_NUMERIC)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            horizon,
            rel_tol,
        } => run(&config, &out, horizon, rel_tol),
        Command::ListScenarios => {
            let scenarios = list_scenarios();
            let width = scenarios.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
            for (name, description) in scenarios {
                println!("{name:width$}  {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Describe { name } => match builtin_scenario(&name) {
            Ok(cfg) => {
                println!("{}", cfg.to_json());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
