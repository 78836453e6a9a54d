//! Sampled certification of the trajectory completeness hypotheses.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::metric::bilinear;
use crate::growth::{
    fit_envelope, CertificateKind, DistanceProxy, EnvelopeSample, FitFailure, FitOutcome, GrowthCertificate, Region,
    MIN_FIT_SAMPLES,
};
use crate::mechanics::chain::{BoundChain, ChainInputs};
use crate::mechanics::problem::TrajectoryProblem;

/// Envelope exponent below which a sampled quantity is treated as bounded.
pub const BOUNDED_EXPONENT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisMode {
    /// (i)–(iii): bounded `S`, affine `R`, quadratic `−V` and `|∂V/∂t|`.
    #[default]
    Standard,
    /// (i), `R = 0`, `V ≥ −C0` and `|∂V/∂t| ≤ C1 (V + C0)`.
    LowerBoundedPotential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub certificate: Option<GrowthCertificate>,
    pub failure: Option<FitFailure>,
}

impl HypothesisCheck {
    fn from_outcome(name: &str, outcome: FitOutcome) -> Self {
        match outcome {
            FitOutcome::Certified(c) => HypothesisCheck {
                name: name.into(),
                passed: true,
                certificate: Some(c),
                failure: None,
            },
            FitOutcome::Failure(f) => HypothesisCheck {
                name: name.into(),
                passed: false,
                certificate: None,
                failure: Some(f),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub mode: HypothesisMode,
    pub checks: Vec<HypothesisCheck>,
    pub region: Region,
    pub b: f64,
    /// Largest `1/λ_min(g)` over the samples.
    pub kappa: f64,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn constant(&self, check: &str, name: &str) -> f64 {
        self.check(check)
            .and_then(|c| c.certificate.as_ref())
            .map(|c| c.constant(name))
            .unwrap_or(f64::NAN)
    }

    /// First failing hypothesis, if any.
    pub fn first_failure(&self) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    /// The arc-length chain for a trajectory starting at `(x0, v0)` at `t = 0`.
    pub fn chain_for(&self, prob: &TrajectoryProblem, x0: &[f64], v0: &[f64]) -> Result<BoundChain> {
        if self.mode != HypothesisMode::Standard || !self.all_passed() {
            return Err(Error::InvalidArgument(
                "the bound chain needs passing standard hypotheses".into(),
            ));
        }
        BoundChain::new(ChainInputs {
            s_bound: self.constant("i", "C0"),
            r0: self.constant("ii", "C0"),
            r1: self.constant("ii", "C1"),
            q0: self.constant("iii", "C0"),
            q2: self.constant("iii", "C2"),
            b: self.b,
            u0: prob.metric.inner(x0, v0, v0)?,
            v_initial: prob.potential_at(x0, 0.0)?,
            d0: self.region.distance(x0),
            kappa: self.kappa,
        })
    }

    /// `(C0, C)` of the lower-bounded-potential mode: `u + 2V + 2C0 ≤ W(0) e^{C t}`.
    pub fn exponential_constants(&self) -> Option<(f64, f64)> {
        if self.mode != HypothesisMode::LowerBoundedPotential || !self.all_passed() {
            return None;
        }
        let c0 = self.constant("v_lower_bound", "C0");
        let c1 = self.constant("dv_dt_relative", "C1");
        let cs = self.constant("i", "C0");
        Some((c0, (2.0 * cs).max(c1)))
    }
}

/// Checks `u + 2V + 2C0 ≤ (u0 + 2V0 + 2C0) e^{C (t − t0)}` along a trajectory ledger.
pub fn exponential_ledger_check(times: &[f64], u: &[f64], v: &[f64], c0: f64, c: f64) -> (bool, Option<f64>) {
    let w0 = u[0] + 2.0 * v[0] + 2.0 * c0;
    for i in 0..times.len() {
        let w = u[i] + 2.0 * v[i] + 2.0 * c0;
        let bound = w0 * (c * (times[i] - times[0])).exp();
        if w > bound * (1.0 + 1e-9) + 1e-12 {
            return (false, Some(times[i]));
        }
    }
    (true, None)
}

/// Operator norm of a `g`-self-adjoint `S` in a `g`-orthonormal frame.
fn orthonormal_norm(s: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("metric is not positive definite".into()))?;
    let l = chol.l();
    let l_inv_t = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let hat = l.transpose() * s * l_inv_t;
    let sym = (&hat + hat.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

struct PointValues {
    point: Vec<f64>,
    s_norm: f64,
    r_norm: f64,
    neg_v: f64,
    abs_dv_dt: f64,
    /// `|∂V/∂t|` paired with `V` at each sampled time.
    v_series: Vec<(f64, f64)>,
    inv_lambda_min: f64,
}

fn sample_point(prob: &TrajectoryProblem, p: &[f64], times: &[f64]) -> Result<PointValues> {
    let g = prob.metric.metric_at(p)?;
    let lambda_min = g.clone().symmetric_eigenvalues().min();
    let mut out = PointValues {
        point: p.to_vec(),
        s_norm: 0.0,
        r_norm: 0.0,
        neg_v: f64::NEG_INFINITY,
        abs_dv_dt: 0.0,
        v_series: Vec::with_capacity(times.len()),
        inv_lambda_min: 1.0 / lambda_min,
    };
    for &t in times {
        let s = prob.self_adjoint_part(p, t)?;
        out.s_norm = out.s_norm.max(orthonormal_norm(&s, &g)?);
        let r = prob.force_at(p, t)?;
        out.r_norm = out.r_norm.max(bilinear(&g, &r, &r).max(0.0).sqrt());
        let v = prob.potential_at(p, t)?;
        let dv = prob.potential_dt_at(p, t)?.abs();
        out.neg_v = out.neg_v.max(-v);
        out.abs_dv_dt = out.abs_dv_dt.max(dv);
        out.v_series.push((v, dv));
    }
    for x in [out.s_norm, out.r_norm, out.neg_v, out.abs_dv_dt] {
        if !x.is_finite() {
            return Err(Error::Eval(format!("hypothesis quantities are not finite at {p:?}")));
        }
    }
    Ok(out)
}

/// Uniform bound `C0 = max` over the samples; with `require_bounded`, fails
/// when the sampled envelope still grows with the distance to the base.
fn uniform_bound(
    name: &str,
    values: &[(Vec<f64>, f64)],
    region: &Region,
    requested: usize,
    require_bounded: bool,
) -> HypothesisCheck {
    let samples: Vec<EnvelopeSample> = values
        .iter()
        .map(|(p, g)| EnvelopeSample {
            point: p.clone(),
            feature: region.distance(p),
            gauge: *g,
        })
        .collect();
    let exponent = crate::growth::envelope_exponent(&samples);
    let max = values.iter().map(|v| v.1).fold(0.0, f64::max);
    let desc = region.describe(requested, values.len());
    if require_bounded && exponent > BOUNDED_EXPONENT && max > 0.0 {
        let (i, _) = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v.1 > acc.1 { (i, v.1) } else { acc });
        return HypothesisCheck {
            name: name.into(),
            passed: false,
            certificate: None,
            failure: Some(FitFailure {
                worst_point: values[i].0.clone(),
                ratio: values[i].1,
                growth_exponent: exponent,
                reason: format!("sampled values grow like |p|^{exponent:.3}"),
            }),
        };
    }
    let c0 = max * (1.0 + 1e-12) + 1e-12;
    let margin = values.iter().map(|v| c0 - v.1).fold(f64::INFINITY, f64::min);
    let mut constants = BTreeMap::new();
    constants.insert("C0".to_string(), c0);
    HypothesisCheck {
        name: name.into(),
        passed: true,
        certificate: Some(GrowthCertificate {
            kind: CertificateKind::UniformBound,
            constants,
            region: desc,
            proxy: DistanceProxy::ChartDistance {
                base: region.center.clone(),
            },
            margin,
            growth_exponent: exponent,
        }),
        failure: None,
    }
}

/// Samples the hypotheses over `region × [0, b]`; `n_samples` spatial points,
/// each evaluated at 9 equally spaced times.
pub fn verify_theorem1_hypotheses(
    prob: &TrajectoryProblem,
    region: &Region,
    b: f64,
    n_samples: usize,
    mode: HypothesisMode,
) -> Result<HypothesisReport> {
    if prob.metric.signature() != 0 {
        return Err(Error::SignatureMismatch {
            point: vec![],
            declared: 0,
            found: prob.metric.signature(),
        });
    }
    if n_samples < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n_samples,
            need: MIN_FIT_SAMPLES,
        });
    }
    if !(b > 0.0) {
        return Err(Error::NonPositiveInput {
            name: "b".into(),
            value: b,
        });
    }
    if !(region.radius > 0.0) || region.center.len() != prob.dim() {
        return Err(Error::EmptyRegion);
    }
    let times: Vec<f64> = (0..9).map(|k| b * k as f64 / 8.0).collect();
    let points = region.samples(n_samples);
    let evaluated: Vec<Result<Option<PointValues>>> = points
        .par_iter()
        .map(|p| match sample_point(prob, p, &times) {
            Ok(v) => Ok(Some(v)),
            Err(Error::OutOfDomain { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut vals = Vec::with_capacity(n_samples);
    for v in evaluated {
        if let Some(v) = v? {
            vals.push(v);
        }
    }
    if vals.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let kappa = vals.iter().map(|v| v.inv_lambda_min).fold(0.0, f64::max);
    let desc = region.describe(n_samples, vals.len());
    let proxy = DistanceProxy::ChartDistance {
        base: region.center.clone(),
    };
    let mut checks = Vec::new();
    let s: Vec<(Vec<f64>, f64)> = vals.iter().map(|v| (v.point.clone(), v.s_norm)).collect();
    let check_i = uniform_bound("i", &s, region, n_samples, false);
    checks.push(check_i);

    match mode {
        HypothesisMode::Standard => {
            let r_samples: Vec<EnvelopeSample> = vals
                .iter()
                .map(|v| EnvelopeSample {
                    point: v.point.clone(),
                    feature: region.distance(&v.point),
                    gauge: v.r_norm,
                })
                .collect();
            let out = fit_envelope(
                &r_samples,
                CertificateKind::AtMostLinearFiniteTimes,
                ("C0", "C1"),
                desc.clone(),
                proxy.clone(),
            )?;
            checks.push(HypothesisCheck::from_outcome("ii", out));
            let v_samples: Vec<EnvelopeSample> = vals
                .iter()
                .map(|v| {
                    let d = region.distance(&v.point);
                    EnvelopeSample {
                        point: v.point.clone(),
                        feature: d * d,
                        gauge: v.neg_v.max(v.abs_dv_dt).max(0.0),
                    }
                })
                .collect();
            let out = fit_envelope(
                &v_samples,
                CertificateKind::QuadraticPotentialBound,
                ("C0", "C2"),
                desc,
                proxy,
            )?;
            checks.push(HypothesisCheck::from_outcome("iii", out));
        }
        HypothesisMode::LowerBoundedPotential => {
            let r_max = vals.iter().map(|v| v.r_norm).fold(0.0, f64::max);
            checks.push(HypothesisCheck {
                name: "r_vanishes".into(),
                passed: r_max == 0.0,
                certificate: None,
                failure: (r_max > 0.0).then(|| {
                    let w = vals
                        .iter()
                        .max_by(|a, b| a.r_norm.total_cmp(&b.r_norm))
                        .expect("non-empty");
                    FitFailure {
                        worst_point: w.point.clone(),
                        ratio: w.r_norm,
                        growth_exponent: f64::NAN,
                        reason: "the lower-bounded-potential mode requires R = 0".into(),
                    }
                }),
            });
            let neg_v: Vec<(Vec<f64>, f64)> = vals.iter().map(|v| (v.point.clone(), v.neg_v.max(0.0))).collect();
            let lower = uniform_bound("v_lower_bound", &neg_v, region, n_samples, true);
            let c0 = lower
                .certificate
                .as_ref()
                .map(|c| c.constant("C0"))
                .unwrap_or(f64::NAN);
            checks.push(lower);
            if c0.is_finite() {
                let ratios: Vec<(Vec<f64>, f64)> = vals
                    .iter()
                    .map(|v| {
                        let r = v
                            .v_series
                            .iter()
                            .map(|(pot, dv)| dv / (pot + c0))
                            .fold(0.0, f64::max);
                        (v.point.clone(), r)
                    })
                    .collect();
                let mut rel = uniform_bound("dv_dt_relative", &ratios, region, n_samples, true);
                if let Some(c) = rel.certificate.as_mut() {
                    let c1 = c.constant("C0");
                    c.constants.clear();
                    c.constants.insert("C1".into(), c1);
                }
                checks.push(rel);
            }
        }
    }
    Ok(HypothesisReport {
        mode,
        checks,
        region: region.clone(),
        b,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::metric::euclidean;
    use std::sync::Arc;

    fn with_potential(f: fn(f64) -> f64, dim: usize) -> TrajectoryProblem {
        TrajectoryProblem::new(euclidean(dim).unwrap())
            .unwrap()
            .with_potential(Arc::new(move |p: &[f64], _t| Ok(f(p[0]))), None)
    }

    #[test]
    fn quadratic_potential_certifies() {
        let prob = with_potential(|x| -x * x, 2);
        let rep = verify_theorem1_hypotheses(&prob, &Region::ball(vec![0.0, 0.0], 10.0), 2.0, 1000, HypothesisMode::Standard).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        let c2 = rep.check("iii").unwrap().certificate.as_ref().unwrap().constant("C2");
        assert!((c2 - 1.0).abs() < 1e-9);
        let chain = rep.chain_for(&prob, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(chain.a > 0.0 && chain.b_coef > 0.0);
    }

    #[test]
    fn quartic_potential_fails_iii() {
        let prob = with_potential(|x| -x.powi(4), 2);
        let rep = verify_theorem1_hypotheses(&prob, &Region::ball(vec![0.0, 0.0], 5.0), 1.0, 1000, HypothesisMode::Standard).unwrap();
        let iii = rep.check("iii").unwrap();
        assert!(!iii.passed);
        let w = &iii.failure.as_ref().unwrap().worst_point;
        assert!((w[0].hypot(w[1]) - 5.0).abs() < 1e-9);
        assert_eq!(rep.first_failure().unwrap().name, "iii");
    }

    #[test]
    fn skew_endomorphism_has_zero_symmetric_part() {
        let prob = TrajectoryProblem::new(euclidean(2).unwrap())
            .unwrap()
            .with_endomorphism(Arc::new(|p: &[f64], t| {
                let w = 1.0 + p[0] * p[0] + t;
                Ok(DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]))
            }));
        let rep = verify_theorem1_hypotheses(&prob, &Region::ball(vec![0.0, 0.0], 3.0), 1.0, 1000, HypothesisMode::Standard)
            .unwrap();
        let c0 = rep.check("i").unwrap().certificate.as_ref().unwrap().constant("C0");
        assert!(c0 <= 1e-10);
    }

    #[test]
    fn lower_bounded_mode() {
        // V = x² (1 + t), ∂V/∂t = x² ≤ 1 · (V + C0).
        let prob = TrajectoryProblem::new(euclidean(2).unwrap()).unwrap().with_potential(
            Arc::new(|p: &[f64], t| Ok(p[0] * p[0] * (1.0 + t))),
            Some(Arc::new(|p: &[f64], _t| Ok(p[0] * p[0]))),
        );
        let rep = verify_theorem1_hypotheses(
            &prob,
            &Region::ball(vec![0.0, 0.0], 4.0),
            1.0,
            1000,
            HypothesisMode::LowerBoundedPotential,
        )
        .unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        let (c0, c) = rep.exponential_constants().unwrap();
        assert!(c0 > 0.0 && c > 0.0 && c <= 1.0 + 1e-9);
    }
}
