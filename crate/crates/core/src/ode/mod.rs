//! Adaptive explicit integration with blow-up and domain-exit diagnosis.

mod dopri;
pub mod escape;
pub mod lift;
pub mod scalar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use dopri::{step, Augmented, StepOutcome};

pub use escape::estimate_escape_time;
pub use lift::{lift_time_dependent, LiftedSystem};
pub use scalar::{comparison_check, solve_scalar_ivp, ComparisonReport, ScalarIvp, ScalarTrajectory};

/// Speed gauge above which a trajectory is declared to blow up.
pub const SPEED_OVERFLOW: f64 = 1e12;
/// Relative step floor: steps below `1e-13 (1 + |t|)` collapse.
pub const STEP_FLOOR: f64 = 1e-13;
/// Width to which domain exits are bisected in `t`.
pub const EXIT_BISECTION_TOL: f64 = 1e-12;

pub const ARC_LENGTH: &str = "arc_length";

/// A first-order system `y' = rhs(t, y)` with a domain guard and a speed gauge.
pub trait FlowSystem: Sync {
    fn state_dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Domain guard on the state.
    fn inside(&self, _y: &[f64]) -> bool {
        true
    }

    /// Nonnegative speed, e.g. `F(c')` or the chart norm of a velocity.
    fn speed(&self, t: f64, y: &[f64]) -> f64;
}

type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) -> Result<()> + Send + Sync;
type GuardFn = dyn Fn(&[f64]) -> bool + Send + Sync;
type SpeedFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Closure-backed [`FlowSystem`].
pub struct FnFlow {
    dim: usize,
    rhs: Box<RhsFn>,
    guard: Option<Box<GuardFn>>,
    speed: Option<Box<SpeedFn>>,
}

impl FnFlow {
    /// Speed defaults to the Euclidean norm of the right-hand side.
    pub fn new(dim: usize, rhs: impl Fn(f64, &[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static) -> Self {
        FnFlow {
            dim,
            rhs: Box::new(rhs),
            guard: None,
            speed: None,
        }
    }

    pub fn with_guard(mut self, guard: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.guard = Some(Box::new(guard));
        self
    }

    pub fn with_speed(mut self, speed: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.speed = Some(Box::new(speed));
        self
    }
}

impl FlowSystem for FnFlow {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.rhs)(t, y, dy)
    }

    fn inside(&self, y: &[f64]) -> bool {
        self.guard.as_ref().is_none_or(|g| g(y))
    }

    fn speed(&self, t: f64, y: &[f64]) -> f64 {
        match &self.speed {
            Some(s) => s(t, y),
            None => {
                let mut dy = vec![0.0; self.dim];
                match (self.rhs)(t, y, &mut dy) {
                    Ok(()) => dy.iter().map(|x| x * x).sum::<f64>().sqrt(),
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size.
    pub max_step: Option<f64>,
    /// When set, samples are recorded on the uniform grid `t0 + k * output_step`
    /// (plus the terminal point) instead of at every accepted step.
    pub output_step: Option<f64>,
    /// Stop with `UserEvent` after this many accepted steps.
    pub max_steps: Option<usize>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: None,
            output_step: None,
            max_steps: None,
        }
    }
}

impl IntegratorOptions {
    pub fn tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorOptions {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    pub fn with_output_step(mut self, dt: f64) -> Self {
        self.output_step = Some(dt);
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }

    fn validate(&self) -> Result<()> {
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(1e-14..=1e-2).contains(&tol) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {tol:e} outside [1e-14, 1e-2]"
                )));
            }
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("max_step must be positive".into()));
            }
        }
        if let Some(h) = self.output_step {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument("output_step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    ExitedDomain,
    StepCollapse,
    SpeedOverflow,
    UserEvent,
}

impl Termination {
    pub fn is_blow_up(self) -> bool {
        matches!(self, Termination::StepCollapse | Termination::SpeedOverflow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub t: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSeries {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub escape_estimate: Option<EscapeEstimate>,
    /// Named scalar series aligned with `times`; always contains `arc_length`.
    pub ledger: Vec<LedgerSeries>,
    /// Size of the last attempted step.
    pub last_step: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl TrajectoryResult {
    pub fn ledger(&self, name: &str) -> Option<&[f64]> {
        self.ledger
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values.as_slice())
    }

    pub fn arc_length(&self) -> &[f64] {
        self.ledger(ARC_LENGTH).expect("arc length is always recorded")
    }

    pub fn push_ledger(&mut self, name: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.times.len());
        self.ledger.push(LedgerSeries {
            name: name.into(),
            values,
        });
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("at least the initial sample")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("at least the initial sample")
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &IntegratorOptions) -> f64 {
    let n = err.len();
    let s: f64 = (0..n)
        .map(|i| {
            let sc = opts.abs_tol + opts.rel_tol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (s / n as f64).sqrt()
}

/// Initial step heuristic from Hairer, Nørsett & Wanner.
fn initial_step<S: FlowSystem + ?Sized>(
    sys: &Augmented<'_, S>,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    opts: &IntegratorOptions,
    span: f64,
) -> f64 {
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| opts.abs_tol + opts.rel_tol * y.abs()).collect();
    let rms = |v: &[f64]| ((0..n).map(|i| (v[i] / sc[i]).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    let d2 = if sys.inside(&y1) && sys.eval(t0 + h0, &y1, &mut f1).is_ok() {
        let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
        rms(&diff) / h0
    } else {
        f64::INFINITY
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    let mut h = (100.0 * h0).min(h1).min(span);
    if let Some(m) = opts.max_step {
        h = h.min(m);
    }
    if !(h > 0.0) || !h.is_finite() {
        h = span.min(1e-6);
    }
    h
}

/// Extrapolates the blow-up time from the last three `(t, speed)` records
/// assuming `speed ≈ C (T - t)^(-k)` locally.
pub(crate) fn extrapolate_blow_up(records: &[(f64, f64)]) -> Option<f64> {
    if records.len() < 3 {
        return None;
    }
    let [(t1, s1), (t2, s2), (t3, s3)] = [
        records[records.len() - 3],
        records[records.len() - 2],
        records[records.len() - 1],
    ];
    if !(t1 < t2 && t2 < t3 && 0.0 < s1 && s1 < s2 && s2 < s3) || !s3.is_finite() {
        return None;
    }
    let (l1, l2, l3) = (s1.ln(), s2.ln(), s3.ln());
    let phi = |big_t: f64| {
        let k12 = (l2 - l1) / ((big_t - t1).ln() - (big_t - t2).ln());
        let k23 = (l3 - l2) / ((big_t - t2).ln() - (big_t - t3).ln());
        k12 - k23
    };
    let span = t3 - t1;
    let mut lo = t3 + 1e-9 * span;
    let mut hi = t3 + 1e3 * span;
    if !(phi(lo) > 0.0 && phi(hi) < 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

struct Recorder {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    arc: Vec<f64>,
}

impl Recorder {
    fn push(&mut self, t: f64, y_aug: &[f64]) {
        if self.times.last().is_some_and(|&last| t <= last) {
            return;
        }
        let n = y_aug.len() - 1;
        self.times.push(t);
        self.states.push(y_aug[..n].to_vec());
        self.arc.push(y_aug[n]);
    }
}

/// Integrates `sys` from `(t0, s0)` towards `horizon`.
pub fn integrate<S: FlowSystem + ?Sized>(
    sys: &S,
    t0: f64,
    s0: &[f64],
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<TrajectoryResult> {
    opts.validate()?;
    if s0.len() != sys.state_dim() {
        return Err(Error::InvalidInitialState(format!(
            "state has {} components, system expects {}",
            s0.len(),
            sys.state_dim()
        )));
    }
    if !(horizon > t0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must exceed t0 {t0}")));
    }
    let aug = Augmented { sys };
    let mut y: Vec<f64> = s0.to_vec();
    y.push(0.0);
    if !aug.inside(&y) {
        return Err(Error::InvalidInitialState("initial state fails the domain guard".into()));
    }
    let mut f = vec![0.0; y.len()];
    aug.eval(t0, &y, &mut f)?;
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteRhs { t: t0 });
    }

    let mut rec = Recorder {
        times: Vec::new(),
        states: Vec::new(),
        arc: Vec::new(),
    };
    rec.push(t0, &y);
    let mut speeds: Vec<(f64, f64)> = vec![(t0, f[f.len() - 1])];

    let mut t = t0;
    let mut h = initial_step(&aug, t0, &y, &f, opts, horizon - t0);
    let mut next_out_index: u64 = 1;
    let out_time = |k: u64| opts.output_step.map(|dt| t0 + k as f64 * dt);

    let (safe, beta): (f64, f64) = (0.9, 0.04);
    let expo1 = 0.2 - beta * 0.75;
    let (facc1, facc2): (f64, f64) = (1.0 / 0.2, 1.0 / 10.0);
    let mut facold: f64 = 1e-4;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    let finish = |rec: Recorder,
                  termination: Termination,
                  escape: Option<EscapeEstimate>,
                  last_step: f64,
                  accepted: usize,
                  rejected: usize| {
        TrajectoryResult {
            ledger: vec![LedgerSeries {
                name: ARC_LENGTH.into(),
                values: rec.arc,
            }],
            times: rec.times,
            states: rec.states,
            termination,
            escape_estimate: escape,
            last_step,
            accepted_steps: accepted,
            rejected_steps: rejected,
        }
    };

    loop {
        if let Some(m) = opts.max_step {
            h = h.min(m);
        }
        let h_unclamped = h;
        let mut hit_output = false;
        if let Some(t_out) = out_time(next_out_index) {
            if t + h >= t_out - 1e-14 * (1.0 + t_out.abs()) && t_out < horizon {
                h = t_out - t;
                hit_output = true;
            }
        }
        let mut hit_horizon = false;
        if t + h >= horizon - 1e-14 * (1.0 + horizon.abs()) {
            h = horizon - t;
            hit_horizon = true;
            hit_output = false;
        }
        if h < STEP_FLOOR * (1.0 + t.abs()) && !hit_horizon && !hit_output {
            rec.push(t, &y);
            let t_star = extrapolate_blow_up(&speeds).unwrap_or(t);
            let esc = EscapeEstimate {
                t: t_star.max(t),
                uncertainty: h.max(f64::EPSILON * (1.0 + t.abs())),
            };
            return Ok(finish(rec, Termination::StepCollapse, Some(esc), h, accepted, rejected));
        }

        match step(&aug, t, &y, &f, h)? {
            StepOutcome::NonFinite => {
                rejected += 1;
                last_rejected = true;
                h *= 0.1;
            }
            StepOutcome::LeftDomain => {
                let (lo, hi, y_lo, f_lo) = bisect_exit(&aug, t, &y, &f, h)?;
                if lo > 0.0 {
                    rec.push(t + lo, &y_lo);
                    let _ = f_lo;
                }
                let t_lo = t + lo;
                let esc = EscapeEstimate {
                    t: t + 0.5 * (lo + hi),
                    uncertainty: (hi - lo).max(f64::EPSILON * (1.0 + t_lo.abs())),
                };
                return Ok(finish(rec, Termination::ExitedDomain, Some(esc), h, accepted, rejected));
            }
            StepOutcome::Done { y_new, f_new, err } => {
                let e = error_norm(&err, &y, &y_new, opts);
                let fac11 = e.powf(expo1);
                if e <= 1.0 {
                    if !aug.inside(&y_new) {
                        let (lo, hi, y_lo, _) = bisect_exit(&aug, t, &y, &f, h)?;
                        if lo > 0.0 {
                            rec.push(t + lo, &y_lo);
                        }
                        let t_lo = t + lo;
                        let esc = EscapeEstimate {
                            t: t + 0.5 * (lo + hi),
                            uncertainty: (hi - lo).max(f64::EPSILON * (1.0 + t_lo.abs())),
                        };
                        return Ok(finish(rec, Termination::ExitedDomain, Some(esc), h, accepted, rejected));
                    }
                    accepted += 1;
                    let t_new = if hit_horizon {
                        horizon
                    } else if hit_output {
                        out_time(next_out_index).unwrap()
                    } else {
                        t + h
                    };
                    t = t_new;
                    y = y_new;
                    f = f_new;
                    let speed = f[f.len() - 1];
                    speeds.push((t, speed));
                    if speeds.len() > 3 {
                        speeds.remove(0);
                    }
                    if opts.output_step.is_none() || hit_output || hit_horizon {
                        rec.push(t, &y);
                    }
                    if hit_output {
                        next_out_index += 1;
                    }
                    if hit_horizon {
                        return Ok(finish(rec, Termination::HorizonReached, None, h, accepted, rejected));
                    }
                    if !(speed <= SPEED_OVERFLOW) {
                        rec.push(t, &y);
                        let t_star = extrapolate_blow_up(&speeds).unwrap_or(t);
                        let esc = EscapeEstimate {
                            t: t_star.max(t),
                            uncertainty: h.max(f64::EPSILON * (1.0 + t.abs())),
                        };
                        return Ok(finish(rec, Termination::SpeedOverflow, Some(esc), h, accepted, rejected));
                    }
                    if opts.max_steps.is_some_and(|m| accepted >= m) {
                        rec.push(t, &y);
                        return Ok(finish(rec, Termination::UserEvent, None, h, accepted, rejected));
                    }
                    let mut fac: f64 = fac11 / facold.powf(beta);
                    fac = facc2.max(facc1.min(fac / safe));
                    let mut h_new = h / fac;
                    if last_rejected {
                        h_new = h_new.min(h);
                    }
                    facold = e.max(1e-4);
                    last_rejected = false;
                    h = if hit_output { h_new.max(h_unclamped) } else { h_new };
                } else {
                    rejected += 1;
                    last_rejected = true;
                    let shrink: f64 = if e.is_finite() { facc1.min(fac11 / safe) } else { 10.0 };
                    h /= shrink;
                }
            }
        }
    }
}

/// Bisects the step length from `(t, y)` until the in/out boundary is
/// bracketed within [`EXIT_BISECTION_TOL`]. Returns `(lo, hi, y(lo), f(lo))`.
fn bisect_exit<S: FlowSystem + ?Sized>(
    aug: &Augmented<'_, S>,
    t: f64,
    y: &[f64],
    f: &[f64],
    h: f64,
) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let mut lo = 0.0;
    let mut hi = h;
    let mut y_lo = y.to_vec();
    let mut f_lo = f.to_vec();
    while hi - lo > EXIT_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match step(aug, t, y, f, mid)? {
            StepOutcome::Done { y_new, f_new, .. } if aug.inside(&y_new) => {
                lo = mid;
                y_lo = y_new;
                f_lo = f_new;
            }
            _ => hi = mid,
        }
    }
    Ok((lo, hi, y_lo, f_lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let sys = FnFlow::new(1, |_t, y, dy| {
            dy[0] = y[0];
            Ok(())
        });
        let r = integrate(&sys, 0.0, &[1.0], 1.0, &IntegratorOptions::tolerances(1e-12, 1e-14)).unwrap();
        assert_eq!(r.termination, Termination::HorizonReached);
        assert!((r.final_state()[0] - std::f64::consts::E).abs() < 1e-8);
        assert!(r.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn quadratic_blow_up_detected() {
        let sys = FnFlow::new(1, |_t, y, dy| {
            dy[0] = y[0] * y[0];
            Ok(())
        });
        let r = integrate(&sys, 0.0, &[1.0], 5.0, &IntegratorOptions::tolerances(1e-10, 1e-12)).unwrap();
        assert!(r.termination.is_blow_up());
        let esc = r.escape_estimate.unwrap();
        assert!(esc.uncertainty > 0.0);
        assert!((esc.t - 1.0).abs() < 1e-6, "{esc:?}");
    }

    #[test]
    fn domain_exit_is_bisected() {
        // u' = -1 from u = 1 leaves u > 0 at t = 1.
        let sys = FnFlow::new(1, |_t, _y, dy| {
            dy[0] = -1.0;
            Ok(())
        })
        .with_guard(|y| y[0] > 0.0);
        let r = integrate(&sys, 0.0, &[1.0], 3.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(r.termination, Termination::ExitedDomain);
        let esc = r.escape_estimate.unwrap();
        assert!((esc.t - 1.0).abs() <= 1e-12);
        assert!((r.t_end() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn output_grid_is_uniform() {
        let sys = FnFlow::new(1, |_t, y, dy| {
            dy[0] = -y[0];
            Ok(())
        });
        let opts = IntegratorOptions::default().with_output_step(0.1);
        let r = integrate(&sys, 0.0, &[1.0], 1.0, &opts).unwrap();
        assert_eq!(r.times.len(), 11);
        for (k, t) in r.times.iter().enumerate() {
            assert!((t - 0.1 * k as f64).abs() < 1e-12);
        }
        assert!((r.final_state()[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn arc_length_is_integrated() {
        let sys = FnFlow::new(1, |_t, _y, dy| {
            dy[0] = 2.0;
            Ok(())
        });
        let r = integrate(&sys, 0.0, &[0.0], 3.0, &IntegratorOptions::default()).unwrap();
        assert!((r.arc_length().last().unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = FnFlow::new(1, |_t, _y, dy| {
            dy[0] = f64::NAN;
            Ok(())
        });
        assert!(matches!(
            integrate(&sys, 0.0, &[0.0], 1.0, &IntegratorOptions::default()),
            Err(Error::NonFiniteRhs { .. })
        ));
        let sys = FnFlow::new(1, |_t, _y, dy| {
            dy[0] = 1.0;
            Ok(())
        })
        .with_guard(|y| y[0] > 0.0);
        assert!(matches!(
            integrate(&sys, 0.0, &[-1.0], 1.0, &IntegratorOptions::default()),
            Err(Error::InvalidInitialState(_))
        ));
        assert!(integrate(&sys, 0.0, &[1.0], 1.0, &IntegratorOptions::tolerances(1e-1, 1e-12)).is_err());
    }

    #[test]
    fn power_law_extrapolation_is_exact() {
        let recs: Vec<(f64, f64)> = [0.9, 0.95, 0.99].iter().map(|&t: &f64| (t, (1.0 - t).powi(-2))).collect();
        let t_star = extrapolate_blow_up(&recs).unwrap();
        assert!((t_star - 1.0).abs() < 1e-12);
    }
}
