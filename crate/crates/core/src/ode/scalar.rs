//! Scalar comparison equations `u' = f(t, u)` and the subsolution check.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{compile, BoundExpr, FunctionTable, NVARS, SLOT_T, SLOT_U};
use crate::ode::{integrate, EscapeEstimate, FnFlow, IntegratorOptions, Termination};

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ScalarIvp {
    f: ScalarFn,
    pub t0: f64,
    pub u0: f64,
}

impl std::fmt::Debug for ScalarIvp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarIvp")
            .field("t0", &self.t0)
            .field("u0", &self.u0)
            .finish_non_exhaustive()
    }
}

impl ScalarIvp {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, t0: f64, u0: f64) -> Self {
        ScalarIvp {
            f: Arc::new(f),
            t0,
            u0,
        }
    }

    /// Builds `f` from an expression in `t` and `u`.
    pub fn from_expression(src: &str, table: &FunctionTable, t0: f64, u0: f64) -> Result<Self> {
        let e: BoundExpr = compile(src, table)?;
        for slot in 0..NVARS {
            if slot != SLOT_T && slot != SLOT_U && e.uses_slot(slot) {
                return Err(Error::InvalidArgument(format!(
                    "scalar right-hand side '{src}' may only depend on t and u"
                )));
            }
        }
        Ok(ScalarIvp::new(
            move |t, u| {
                let mut vars = [0.0; NVARS];
                vars[SLOT_T] = t;
                vars[SLOT_U] = u;
                e.eval(&vars).unwrap_or(f64::NAN)
            },
            t0,
            u0,
        ))
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        (self.f)(t, u)
    }

    fn flow(&self) -> FnFlow {
        let f = Arc::clone(&self.f);
        FnFlow::new(1, move |t, y, dy| {
            dy[0] = f(t, y[0]);
            Ok(())
        })
        .with_speed({
            let f = Arc::clone(&self.f);
            move |t, y| f(t, y[0]).abs()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub termination: Termination,
    pub escape_estimate: Option<EscapeEstimate>,
}

impl ScalarTrajectory {
    /// A sampled function, e.g. a candidate subsolution.
    pub fn from_samples(times: Vec<f64>, values: Vec<f64>) -> Self {
        ScalarTrajectory {
            times,
            values,
            termination: Termination::UserEvent,
            escape_estimate: None,
        }
    }

    pub fn value_at_end(&self) -> f64 {
        *self.values.last().expect("non-empty trajectory")
    }
}

pub fn solve_scalar_ivp(ivp: &ScalarIvp, t_end: f64, rel_tol: f64) -> Result<ScalarTrajectory> {
    let opts = IntegratorOptions::tolerances(rel_tol, (rel_tol * 1e-2).max(1e-14));
    let r = integrate(&ivp.flow(), ivp.t0, &[ivp.u0], t_end, &opts)?;
    Ok(ScalarTrajectory {
        values: r.states.iter().map(|s| s[0]).collect(),
        times: r.times,
        termination: r.termination,
        escape_estimate: r.escape_estimate,
    })
}

/// Solves the IVP and samples it at the given increasing times, restarting
/// the integrator at each grid point. Entries past a blow-up are `+inf`.
fn solve_on_grid(ivp: &ScalarIvp, grid: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let flow = ivp.flow();
    let opts = IntegratorOptions::tolerances(rel_tol, (rel_tol * 1e-2).max(1e-14));
    let mut out = Vec::with_capacity(grid.len());
    out.push(ivp.u0);
    let mut u = ivp.u0;
    for w in grid.windows(2) {
        if !u.is_finite() {
            out.push(f64::INFINITY);
            continue;
        }
        let r = integrate(&flow, w[0], &[u], w[1], &opts)?;
        u = match r.termination {
            Termination::HorizonReached => r.final_state()[0],
            t if t.is_blow_up() => f64::INFINITY,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "comparison solution terminated with {other:?} at t = {}",
                    r.t_end()
                )))
            }
        };
        out.push(u);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub holds: bool,
    pub first_violation: Option<f64>,
    /// Smallest `u - w` over grid points after `t0`.
    pub min_gap: f64,
    pub points: usize,
}

/// Checks `w(t_i) < u(t_i) + strict_margin` on `w`'s grid after `t0` and
/// `w(t0) <= u0` at the start, where `u` solves `ivp`.
pub fn comparison_check(w: &ScalarTrajectory, ivp: &ScalarIvp, strict_margin: f64) -> Result<ComparisonReport> {
    let grid = &w.times;
    if grid.is_empty() || grid.len() != w.values.len() {
        return Err(Error::GridMismatch("sample grid is empty or ragged".into()));
    }
    if (grid[0] - ivp.t0).abs() > 1e-12 * (1.0 + ivp.t0.abs()) {
        return Err(Error::GridMismatch(format!(
            "grid starts at {} but the IVP starts at {}",
            grid[0], ivp.t0
        )));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::GridMismatch("grid is not strictly increasing".into()));
    }
    let u = solve_on_grid(ivp, grid, 1e-12)?;
    let mut first_violation = None;
    if !(w.values[0] <= ivp.u0 + strict_margin) {
        first_violation = Some(grid[0]);
    }
    let mut min_gap = f64::INFINITY;
    for i in 1..grid.len() {
        let gap = u[i] - w.values[i];
        min_gap = min_gap.min(gap);
        if first_violation.is_none() && !(w.values[i] < u[i] + strict_margin) {
            first_violation = Some(grid[i]);
        }
    }
    Ok(ComparisonReport {
        holds: first_violation.is_none(),
        first_violation,
        min_gap,
        points: grid.len(),
    })
}
