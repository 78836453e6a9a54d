use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geom::causal::causal_character;
use crate::geom::connection::{covariant_curvature_derivative_norm, ricci};
use crate::growth::{classify_primarily_complete, PrimaryVerdict, Region};
use crate::mechanics::{
    energy_rate_residual, exponential_ledger_check, solve_finsler, verify_theorem1_hypotheses, FinslerFlow,
    HypothesisCheck, HypothesisMode, HypothesisReport, TrajectoryFlow, POTENTIAL, U_METRIC,
};
use crate::ode::{estimate_escape_time, integrate, IntegratorOptions, Termination, TrajectoryResult};
use crate::waves::{check_pp_curvature_condition, geodesic_riemannian_reduction_check, killing_conservation, reduced_flow};

use super::build::{build_scenario, eval_field, BuiltScenario, Dynamics, PreparedCheck};
use super::config::{CheckConfig, Expectation, InitialCondition, RunConfig, ScenarioConfig};

pub const FORMAT_TAG: &str = "completeness-lab/1";

/// Multiple of the finite-difference error estimate below which a tensor counts as zero.
const FD_FACTOR: f64 = 10.0;
const VACUUM_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedComplete,
    NumericallyCompleteToHorizon,
    NumericallyIncomplete,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CertifiedComplete => "certified-complete",
            Verdict::NumericallyCompleteToHorizon => "numerically-complete-to-horizon",
            Verdict::NumericallyIncomplete => "numerically-incomplete",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (residual, drift, gap, ...).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Signed distance to failure; positive when passing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    fn below(name: &str, value: f64, threshold: f64, details: Value) -> Self {
        CheckResult {
            name: name.into(),
            passed: value <= threshold,
            value: Some(value),
            threshold: Some(threshold),
            margin: Some(threshold - value),
            details,
            error: None,
        }
    }

    fn flag(name: &str, passed: bool, value: Option<f64>, details: Value) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            value,
            threshold: None,
            margin: None,
            details,
            error: None,
        }
    }

    fn failed(name: &str, e: &Error) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            value: None,
            threshold: None,
            margin: None,
            details: Value::Null,
            error: Some(e.to_string()),
        }
    }

    fn from_result(name: &str, r: Result<CheckResult>) -> Self {
        r.unwrap_or_else(|e| CheckResult::failed(name, &e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeSummary {
    pub t_star: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionReport {
    pub index: usize,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub verdict: Verdict,
    pub termination: Option<Termination>,
    pub t_end: Option<f64>,
    pub samples: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub escape_estimate: Option<EscapeSummary>,
    pub checks: Vec<CheckResult>,
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSummary {
    pub label: String,
    pub dim: usize,
    pub signature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub source: String,
    #[serde(flatten)]
    pub check: HypothesisCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub scenario: String,
    pub manifold: ManifoldSummary,
    pub settings: RunConfig,
    pub global_checks: Vec<CheckResult>,
    pub certificates: Vec<CertificateEntry>,
    pub initial_conditions: Vec<InitialConditionReport>,
    /// An integration failed with an internal numerical error.
    pub numeric_failure: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// A finished run: the report plus the trajectories for CSV export.
pub struct RunOutcome {
    pub report: RunReport,
    pub trajectories: Vec<Option<TrajectoryResult>>,
    pub dim: usize,
}

fn options(run: &RunConfig) -> IntegratorOptions {
    IntegratorOptions {
        rel_tol: run.rel_tol,
        abs_tol: run.abs_tol,
        max_step: None,
        output_step: run.output_step,
        max_steps: run.max_steps,
    }
}

fn hypotheses_check(
    built: &BuiltScenario,
    cfg: &ScenarioConfig,
    check: &CheckConfig,
) -> (CheckResult, Option<HypothesisReport>) {
    let CheckConfig::Hypotheses {
        b,
        radius,
        center,
        samples,
        mode,
        seed,
    } = check
    else {
        unreachable!()
    };
    let Dynamics::Trajectory(prob) = &built.dynamics else {
        let e = Error::InvalidArgument("hypotheses need a metric trajectory problem".into());
        return (CheckResult::failed("hypotheses", &e), None);
    };
    let center = center.clone().unwrap_or_else(|| cfg.initial_conditions[0].x.clone());
    let region = Region::ball(center, *radius).with_seed(*seed);
    match verify_theorem1_hypotheses(prob, &region, *b, *samples, *mode) {
        Ok(rep) => {
            let failed = rep.first_failure().map(|c| c.name.clone());
            let result = CheckResult::flag(
                "hypotheses",
                rep.all_passed(),
                None,
                json!({
                    "mode": rep.mode,
                    "b": rep.b,
                    "kappa": rep.kappa,
                    "passed": rep.checks.iter().map(|c| (c.name.clone(), c.passed)).collect::<std::collections::BTreeMap<_, _>>(),
                    "first_failure": failed,
                }),
            );
            (result, Some(rep))
        }
        Err(e) => (CheckResult::failed("hypotheses", &e), None),
    }
}

fn global_check(built: &BuiltScenario, cfg: &ScenarioConfig, check: &PreparedCheck) -> CheckResult {
    let name = check.config.name();
    let r = (|| -> Result<CheckResult> {
        match &check.config {
            CheckConfig::CurvatureCondition { points, .. } => {
                let g = built.metric.as_ref().expect("checked at build time");
                let field = check.field.as_ref().expect("compiled at build time");
                let points = points
                    .clone()
                    .unwrap_or_else(|| cfg.initial_conditions.iter().map(|ic| ic.x.clone()).collect());
                let rep = check_pp_curvature_condition(g, |p| eval_field(field, built.names, p), &points)?;
                let mut res = CheckResult::below(
                    name,
                    rep.max_component,
                    FD_FACTOR * rep.fd_error,
                    serde_json::to_value(&rep.points).expect("serializable"),
                );
                res.passed = rep.passes;
                Ok(res)
            }
            CheckConfig::CurvatureDerivative {
                order,
                points,
                expect,
                tolerance,
            } => {
                let g = built.metric.as_ref().expect("checked at build time");
                let mut value = 0.0f64;
                let mut error = 0.0f64;
                for p in points {
                    let est = covariant_curvature_derivative_norm(g, p, *order)?;
                    value = value.max(est.value);
                    error = error.max(est.error);
                }
                let details = json!({ "order": order, "fd_error": error, "expect": expect });
                Ok(match expect {
                    Expectation::Vanishing => CheckResult::below(name, value, *tolerance, details),
                    Expectation::Nonvanishing => {
                        let threshold = FD_FACTOR * error;
                        CheckResult {
                            passed: value > threshold,
                            margin: Some(value - threshold),
                            threshold: Some(threshold),
                            ..CheckResult::flag(name, false, Some(value), details)
                        }
                    }
                })
            }
            CheckConfig::Growth { x_max, expect, .. } => {
                let alpha = check.alpha.as_ref().expect("compiled at build time");
                let (verdict, diag) = classify_primarily_complete(alpha, *x_max)?;
                let passed = match expect {
                    Some(e) => *e == verdict,
                    None => verdict != PrimaryVerdict::Inconclusive,
                };
                Ok(CheckResult::flag(
                    name,
                    passed,
                    Some(diag.partial_integral),
                    json!({ "verdict": verdict, "expect": expect, "diagnostics": diag }),
                ))
            }
            _ => unreachable!("per-trajectory or hypotheses check"),
        }
    })();
    CheckResult::from_result(name, r)
}

fn max_drift(values: &[f64]) -> f64 {
    let first = values.first().copied().unwrap_or(0.0);
    values.iter().map(|x| (x - first).abs()).fold(0.0, f64::max)
}

fn trajectory_check(
    built: &BuiltScenario,
    check: &PreparedCheck,
    traj: &TrajectoryResult,
    ic: &InitialCondition,
    run: &RunConfig,
    hypotheses: Option<&HypothesisReport>,
) -> CheckResult {
    let name = check.config.name();
    let n = built.dim;
    let r = (|| -> Result<CheckResult> {
        match &check.config {
            CheckConfig::BoundChain => {
                let Dynamics::Trajectory(prob) = &built.dynamics else {
                    return Err(Error::InvalidArgument("bound chain needs a trajectory problem".into()));
                };
                let rep = hypotheses.ok_or_else(|| Error::InvalidArgument("hypotheses were not evaluated".into()))?;
                if !rep.all_passed() {
                    return Err(Error::InvalidArgument("hypotheses did not certify".into()));
                }
                let rel: Vec<f64> = traj.times.iter().map(|t| t - ic.t0).collect();
                match rep.mode {
                    HypothesisMode::Standard => {
                        let chain = rep.chain_for(prob, &ic.x, &ic.v)?;
                        let c = chain.check_arc_length(&rel, traj.arc_length());
                        Ok(CheckResult {
                            margin: Some(c.min_gap),
                            ..CheckResult::flag(
                                name,
                                c.holds,
                                Some(c.min_gap),
                                json!({
                                    "A": chain.a,
                                    "B": chain.b_coef,
                                    "first_violation": c.first_violation,
                                    "checked": c.checked,
                                }),
                            )
                        })
                    }
                    HypothesisMode::LowerBoundedPotential => {
                        let (c0, c) = rep
                            .exponential_constants()
                            .ok_or_else(|| Error::InvalidArgument("no exponential constants".into()))?;
                        let k = rel.iter().take_while(|s| **s <= rep.b).count();
                        let u = traj.ledger(U_METRIC).expect("trajectory ledger");
                        let v = traj.ledger(POTENTIAL).expect("trajectory ledger");
                        let (holds, first) = exponential_ledger_check(&rel[..k], &u[..k], &v[..k], c0, c);
                        Ok(CheckResult::flag(
                            name,
                            holds,
                            None,
                            json!({ "C0": c0, "C": c, "first_violation": first, "checked": k }),
                        ))
                    }
                }
            }
            CheckConfig::EnergyLedger { tolerance } => {
                let Dynamics::Trajectory(prob) = &built.dynamics else {
                    return Err(Error::InvalidArgument("energy ledger needs a trajectory problem".into()));
                };
                Ok(CheckResult::below(name, energy_rate_residual(prob, traj)?, *tolerance, Value::Null))
            }
            CheckConfig::Killing { tolerance, .. } => {
                let g = built.metric.as_ref().expect("checked at build time");
                let field = check.field.as_ref().expect("compiled at build time");
                let drift = killing_conservation(g, |p| eval_field(field, built.names, p), traj)?;
                Ok(CheckResult::below(name, drift, *tolerance, Value::Null))
            }
            CheckConfig::Reduction { tolerance } => {
                let spec = built.ppwave.as_ref().expect("checked at build time");
                let rep = geodesic_riemannian_reduction_check(spec, traj)?;
                let u_dot = ic.v[0];
                let affinity_tol = 1e-7 * (1.0 + u_dot.abs());
                let flow = reduced_flow(spec, ic.x[0] - u_dot * ic.t0, u_dot)?;
                let mut s0 = ic.x[2..].to_vec();
                s0.extend_from_slice(&ic.v[2..]);
                let reduced = integrate(&flow, ic.t0, &s0, run.horizon, &options(run))?;
                let geodesic_complete = traj.termination == Termination::HorizonReached;
                let reduced_complete = reduced.termination == Termination::HorizonReached;
                let mut res = CheckResult::below(
                    name,
                    rep.residual,
                    *tolerance,
                    json!({
                        "u_affinity_drift": rep.u_affinity_drift,
                        "u_affinity_threshold": affinity_tol,
                        "geodesic_complete": geodesic_complete,
                        "reduced_complete": reduced_complete,
                        "reduced_termination": reduced.termination,
                        "reduced_t_end": reduced.t_end(),
                    }),
                );
                res.passed &= rep.u_affinity_drift < affinity_tol && geodesic_complete == reduced_complete;
                Ok(res)
            }
            CheckConfig::Vacuum => {
                let g = built.metric.as_ref().expect("checked at build time");
                let m = traj.states.len();
                let picks: Vec<usize> = (0..VACUUM_SAMPLES.min(m))
                    .map(|k| k * (m - 1) / (VACUUM_SAMPLES - 1).max(1))
                    .collect();
                let mut worst_ratio = 0.0f64;
                let mut worst = 0.0f64;
                for i in picks {
                    let ric = ricci(g, &traj.states[i][..n])?;
                    worst = worst.max(ric.max_abs());
                    worst_ratio = worst_ratio.max(ric.max_abs() / (FD_FACTOR * ric.estimated_fd_error));
                }
                Ok(CheckResult::flag(
                    name,
                    worst_ratio <= 1.0,
                    Some(worst),
                    json!({ "ratio_to_threshold": worst_ratio }),
                ))
            }
            CheckConfig::CausalCharacter { tolerance } => {
                let g = built.metric.as_ref().expect("checked at build time");
                let first = causal_character(g, &ic.x, &ic.v, *tolerance)?;
                let mut changed_at = None;
                for (t, s) in traj.times.iter().zip(&traj.states) {
                    if causal_character(g, &s[..n], &s[n..], *tolerance)? != first {
                        changed_at = Some(*t);
                        break;
                    }
                }
                Ok(CheckResult::flag(
                    name,
                    changed_at.is_none(),
                    None,
                    json!({ "character": first, "changed_at": changed_at }),
                ))
            }
            CheckConfig::FinslerSpeed { tolerance } => {
                let speeds = traj
                    .ledger("finsler_speed")
                    .ok_or_else(|| Error::InvalidArgument("no Finsler speed ledger".into()))?;
                Ok(CheckResult::below(name, max_drift(speeds), *tolerance, Value::Null))
            }
            _ => unreachable!("global check"),
        }
    })();
    CheckResult::from_result(name, r)
}

fn solve(built: &BuiltScenario, ic: &InitialCondition, run: &RunConfig) -> Result<TrajectoryResult> {
    let opts = options(run);
    match &built.dynamics {
        Dynamics::Trajectory(prob) => prob.solve(ic.t0, &ic.x, &ic.v, ic.t0 + run.horizon, &opts),
        Dynamics::Finsler { metric, potential } => {
            solve_finsler(metric, potential.as_ref(), ic.t0, &ic.x, &ic.v, ic.t0 + run.horizon, &opts)
        }
    }
}

fn escape(built: &BuiltScenario, ic: &InitialCondition, run: &RunConfig) -> Result<EscapeSummary> {
    let mut s0 = ic.x.clone();
    s0.extend_from_slice(&ic.v);
    let horizon = ic.t0 + run.horizon;
    let e = match &built.dynamics {
        Dynamics::Trajectory(prob) => estimate_escape_time(&TrajectoryFlow { problem: prob }, ic.t0, &s0, horizon, run.rel_tol)?,
        Dynamics::Finsler { metric, potential } => estimate_escape_time(
            &FinslerFlow {
                metric,
                potential: potential.as_ref(),
            },
            ic.t0,
            &s0,
            horizon,
            run.rel_tol,
        )?,
    };
    Ok(EscapeSummary {
        t_star: e.t_star,
        uncertainty: e.uncertainty,
    })
}

fn run_one(
    built: &BuiltScenario,
    cfg: &ScenarioConfig,
    index: usize,
    hypotheses: Option<&HypothesisReport>,
) -> (InitialConditionReport, Option<TrajectoryResult>, bool) {
    let ic = &cfg.initial_conditions[index];
    let run = &cfg.run;
    let mut report = InitialConditionReport {
        index,
        t0: ic.t0,
        x0: ic.x.clone(),
        v0: ic.v.clone(),
        verdict: Verdict::Inconclusive,
        termination: None,
        t_end: None,
        samples: 0,
        accepted_steps: 0,
        rejected_steps: 0,
        escape_estimate: None,
        checks: vec![],
        csv: None,
        error: None,
    };
    let traj = match solve(built, ic, run) {
        Ok(t) => t,
        Err(e) => {
            report.error = Some(e.to_string());
            return (report, None, true);
        }
    };
    report.termination = Some(traj.termination);
    report.t_end = Some(traj.t_end());
    report.samples = traj.times.len();
    report.accepted_steps = traj.accepted_steps;
    report.rejected_steps = traj.rejected_steps;
    report.csv = Some(format!("trajectory_{index}.csv"));
    report.checks = built
        .checks
        .iter()
        .filter(|c| c.config.per_trajectory())
        .map(|c| trajectory_check(built, c, &traj, ic, run, hypotheses))
        .collect();
    let passed = |name: &str| report.checks.iter().any(|c| c.name == name && c.passed);
    let certified = hypotheses.is_some_and(|h| h.all_passed()) && passed("bound-chain");
    report.verdict = match traj.termination {
        Termination::HorizonReached if certified => Verdict::CertifiedComplete,
        Termination::HorizonReached => Verdict::NumericallyCompleteToHorizon,
        Termination::ExitedDomain => {
            let t = traj.t_end();
            report.escape_estimate = Some(EscapeSummary {
                t_star: t,
                uncertainty: 1e-12 * (1.0 + t.abs()),
            });
            Verdict::NumericallyIncomplete
        }
        Termination::StepCollapse | Termination::SpeedOverflow => match escape(built, ic, run) {
            Ok(e) => {
                report.escape_estimate = Some(e);
                Verdict::NumericallyIncomplete
            }
            Err(e) => {
                report.error = Some(format!("escape estimate failed: {e}"));
                Verdict::Inconclusive
            }
        },
        Termination::UserEvent => Verdict::Inconclusive,
    };
    (report, Some(traj), false)
}

/// Runs every initial condition and check of a scenario. Configuration errors
/// are returned as `Err`; numerical failures are recorded in the report.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    let built = build_scenario(cfg)?;
    let mut global_checks = Vec::new();
    let mut certificates = Vec::new();
    let mut hypotheses = None;
    for check in &built.checks {
        if check.config.per_trajectory() {
            continue;
        }
        if let CheckConfig::Hypotheses { .. } = check.config {
            let (res, rep) = hypotheses_check(&built, cfg, &check.config);
            if let Some(rep) = &rep {
                certificates.extend(rep.checks.iter().map(|c| CertificateEntry {
                    source: "hypotheses".into(),
                    check: c.clone(),
                }));
            }
            hypotheses = rep;
            global_checks.push(res);
        } else {
            global_checks.push(global_check(&built, cfg, check));
        }
    }
    let results: Vec<_> = (0..cfg.initial_conditions.len())
        .into_par_iter()
        .map(|i| run_one(&built, cfg, i, hypotheses.as_ref()))
        .collect();
    let mut ics = Vec::with_capacity(results.len());
    let mut trajectories = Vec::with_capacity(results.len());
    let mut numeric_failure = false;
    for (rep, traj, failed) in results {
        ics.push(rep);
        trajectories.push(traj);
        numeric_failure |= failed;
    }
    Ok(RunOutcome {
        report: RunReport {
            format: FORMAT_TAG.into(),
            scenario: cfg.name.clone(),
            manifold: ManifoldSummary {
                label: built.label.clone(),
                dim: built.dim,
                signature: built.signature,
            },
            settings: cfg.run,
            global_checks,
            certificates,
            initial_conditions: ics,
            numeric_failure,
        },
        trajectories,
        dim: built.dim,
    })
}
