use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, EscapeEstimate, FlowSystem, IntegratorOptions, Termination};

/// Refinement factor between the two runs.
pub const REFINEMENT: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeTime {
    pub t_star: f64,
    pub uncertainty: f64,
    pub coarse: EscapeEstimate,
    pub fine: EscapeEstimate,
}

/// Integrates at `rel_tol` and `rel_tol / 16` and combines the two terminal
/// estimates. Fails with `NotIncomplete` if the tightened run reaches `horizon`.
pub fn estimate_escape_time<S: FlowSystem + ?Sized>(
    sys: &S,
    t0: f64,
    s0: &[f64],
    horizon: f64,
    rel_tol: f64,
) -> Result<EscapeTime> {
    let abs_tol = (rel_tol * 1e-2).max(1e-14);
    let run = |rt: f64| -> Result<(Termination, Option<EscapeEstimate>, f64)> {
        let r = integrate(sys, t0, s0, horizon, &IntegratorOptions::tolerances(rt, abs_tol.min(rt)))?;
        Ok((r.termination, r.escape_estimate, r.last_step))
    };
    let fine_tol = (rel_tol / REFINEMENT).max(1e-14);
    let (term_f, est_f, step_f) = run(fine_tol)?;
    let fine = match (term_f, est_f) {
        (Termination::HorizonReached, _) | (_, None) => return Err(Error::NotIncomplete),
        (_, Some(e)) => e,
    };
    let (_, est_c, _) = run(rel_tol)?;
    let coarse = est_c.unwrap_or(fine);
    let t_star = coarse.t.max(fine.t);
    // The last term is the integration error floor of the tightened run.
    let uncertainty =
        (coarse.t - fine.t).abs() + step_f.abs().max(fine.uncertainty) + fine_tol * (1.0 + t_star.abs());
    Ok(EscapeTime {
        t_star,
        uncertainty,
        coarse,
        fine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::FnFlow;

    #[test]
    fn inverse_linear_blow_up() {
        let sys = FnFlow::new(1, |_t, y, dy| {
            dy[0] = y[0] * y[0];
            Ok(())
        });
        let e = estimate_escape_time(&sys, 0.0, &[1.0], 10.0, 1e-10).unwrap();
        assert!((e.t_star - 1.0).abs() < 1e-6, "{e:?}");
        assert!(e.uncertainty > 0.0);
    }

    #[test]
    fn complete_flow_is_reported() {
        let sys = FnFlow::new(1, |_t, y, dy| {
            dy[0] = -y[0];
            Ok(())
        });
        assert_eq!(
            estimate_escape_time(&sys, 0.0, &[1.0], 10.0, 1e-8),
            Err(Error::NotIncomplete)
        );
    }
}
