use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::error::{Error, Result};
use crate::mechanics::U_METRIC;
use crate::ode::{TrajectoryResult, ARC_LENGTH};

use super::config::ScenarioConfig;
use super::run::{run_scenario, RunOutcome, FORMAT_TAG};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "COMPLETENESS_LAB_THREADS";

/// Trajectory as CSV: `t, x1..xn, v1..vn, u_metric, arc_length`, then the remaining ledger series.
pub fn trajectory_csv(traj: &TrajectoryResult, dim: usize) -> String {
    let u_metric: Vec<f64> = match (traj.ledger(U_METRIC), traj.ledger("finsler_speed")) {
        (Some(u), _) => u.to_vec(),
        (None, Some(f)) => f.iter().map(|x| x * x).collect(),
        (None, None) => vec![f64::NAN; traj.times.len()],
    };
    let extras: Vec<_> = traj
        .ledger
        .iter()
        .filter(|s| s.name != U_METRIC && s.name != ARC_LENGTH)
        .collect();
    let mut out = String::from("t");
    for i in 1..=dim {
        write!(out, ",x{i}").unwrap();
    }
    for i in 1..=dim {
        write!(out, ",v{i}").unwrap();
    }
    out.push_str(",u_metric,arc_length");
    for s in &extras {
        write!(out, ",{}", s.name).unwrap();
    }
    out.push('\n');
    let arc = traj.arc_length();
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        write!(out, "{t}").unwrap();
        for c in &s[..2 * dim] {
            write!(out, ",{c}").unwrap();
        }
        write!(out, ",{},{}", u_metric[k], arc[k]).unwrap();
        for e in &extras {
            write!(out, ",{}", e.values[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `report.json`, `meta.json` and one CSV per integrated initial condition.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path, threads: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), outcome.report.to_json())?;
    for (rep, traj) in outcome.report.initial_conditions.iter().zip(&outcome.trajectories) {
        if let (Some(name), Some(traj)) = (&rep.csv, traj) {
            fs::write(dir.join(name), trajectory_csv(traj, outcome.dim))?;
        }
    }
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "format": FORMAT_TAG,
        "scenario": outcome.report.scenario,
        "generated_at_unix": secs,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": threads,
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta).expect("json") + "\n")?;
    Ok(())
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::config(
                format!("${THREADS_ENV}"),
                format!("expected an integer >= 1, got {s:?}"),
            )),
        },
    }
}

/// Runs a scenario on a dedicated pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<(RunOutcome, usize)> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let n = pool.current_num_threads();
    Ok((pool.install(|| run_scenario(cfg))?, n))
}
