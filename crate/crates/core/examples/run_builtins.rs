//! Runs every builtin scenario and prints verdicts and check outcomes.
use std::time::Instant;

use complab_core::scenario::{builtin_scenario, run_scenario, BUILTINS};

fn main() -> complab_core::Result<()> {
    for (name, _) in BUILTINS {
        let start = Instant::now();
        let out = run_scenario(&builtin_scenario(name)?)?;
        println!("{name} ({:.2}s)", start.elapsed().as_secs_f64());
        for c in &out.report.global_checks {
            println!("  {:<24} {} {:?}", c.name, c.passed, c.value);
        }
        for ic in &out.report.initial_conditions {
            println!("  [{}] {} escape={:?}", ic.index, ic.verdict.as_str(), ic.escape_estimate);
            for c in &ic.checks {
                println!("    {:<22} {} {:?}", c.name, c.passed, c.value);
            }
        }
    }
    Ok(())
}
