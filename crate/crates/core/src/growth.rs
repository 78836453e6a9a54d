//! Growth certificates: primarily complete bounding functions, sampled
//! affine/quadratic envelopes and the proper-map criterion.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, FunctionTable, NVARS};

/// Points on which bounding functions are validated.
pub const VALIDATION_POINTS: usize = 2001;
/// Half-width of the inconclusive band for the log-log slope test.
pub const SLOPE_EPSILON: f64 = 0.05;
/// Envelope growth exponent above which an affine-type fit is refused.
pub const SUPERLINEAR_THRESHOLD: f64 = 1.05;
pub const MIN_FIT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AsymptoticTag {
    Affine,
    Poly { degree: f64 },
    XLogIterates { k: u32 },
    UserDivergent,
    UserConvergent,
    Untagged,
}

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A positive nondecreasing function α on `[0, ∞)` with an asymptotic tag.
#[derive(Clone)]
pub struct BoundingFunction {
    f: ScalarMap,
    tag: AsymptoticTag,
    source: String,
}

impl fmt::Debug for BoundingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundingFunction")
            .field("source", &self.source)
            .field("tag", &self.tag)
            .finish()
    }
}

/// Checks positivity and monotonicity of `f` on a uniform grid over `[0, x_max]`.
fn validate_alpha(f: &dyn Fn(f64) -> f64, x_max: f64) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for k in 0..VALIDATION_POINTS {
        let x = x_max * k as f64 / (VALIDATION_POINTS - 1) as f64;
        let a = f(x);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::NonPositiveAlpha { x, value: a });
        }
        if a < prev - 1e-12 * prev.abs() {
            return Err(Error::NotNondecreasing { x });
        }
        prev = a;
    }
    Ok(())
}

impl BoundingFunction {
    /// Validates `f` on `[0, x_max]`.
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        tag: AsymptoticTag,
        source: impl Into<String>,
        x_max: f64,
    ) -> Result<Self> {
        validate_alpha(&f, x_max)?;
        Ok(BoundingFunction {
            f: Arc::new(f),
            tag,
            source: source.into(),
        })
    }

    /// Builds α from an expression in the variable `x` (or `x1`).
    pub fn from_expression(src: &str, table: &FunctionTable, tag: AsymptoticTag, x_max: f64) -> Result<Self> {
        let e = parse_expression(src)?.rename("x", "x1").bind(table)?;
        let slot = crate::expr::slot_x(1);
        if (0..NVARS).any(|s| s != slot && e.uses_slot(s)) {
            return Err(Error::InvalidArgument(format!(
                "bounding function '{src}' may only depend on x"
            )));
        }
        Self::new(
            move |x| {
                let mut vars = [0.0; NVARS];
                vars[slot] = x;
                e.eval(&vars).unwrap_or(f64::NAN)
            },
            tag,
            src,
            x_max,
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn tag(&self) -> AsymptoticTag {
        self.tag
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryVerdict {
    PrimarilyComplete,
    NotPrimarilyComplete,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyDiagnostics {
    /// `∫₀^{X_max} dx / α(x)`.
    pub partial_integral: f64,
    pub integral_error: f64,
    /// Log-log slope of α on `[X_max/10, X_max]`.
    pub slope: f64,
    pub decided_by_tag: bool,
}

/// Adaptive Gauss–Kronrod (7, 15) quadrature.
pub fn integrate_gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    let rule = |a: f64, b: f64| {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut k = WK[7] * fc;
        let mut g = WG[3] * fc;
        for j in 0..7 {
            let s = f(c - h * XK[j]) + f(c + h * XK[j]);
            k += WK[j] * s;
            if j % 2 == 1 {
                g += WG[j / 2] * s;
            }
        }
        (k * h, ((k - g) * h).abs())
    };
    let mut parts = vec![(a, b, rule(a, b))];
    for _ in 0..5000 {
        let total_err: f64 = parts.iter().map(|p| p.2 .1).sum();
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        if total_err <= tol * (1.0 + total.abs()) {
            break;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, rule(lo, mid)));
        parts.push((mid, hi, rule(mid, hi)));
    }
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    (parts.iter().map(|p| p.2 .0).sum(), parts.iter().map(|p| p.2 .1).sum())
}

/// Least-squares slope of `ln α` against `ln x` on 200 log-spaced points of `[x_max/10, x_max]`.
fn log_log_slope(alpha: &BoundingFunction, x_max: f64) -> f64 {
    let n = 200;
    let (lo, hi) = ((x_max / 10.0).ln(), x_max.ln());
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let lx = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            (lx, alpha.eval(lx.exp()).ln())
        })
        .collect();
    least_squares_slope(&pts)
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Decides whether `∫₀^∞ dx/α = ∞` from the tag, or from the log-log slope when untagged.
pub fn classify_primarily_complete(alpha: &BoundingFunction, x_max: f64) -> Result<(PrimaryVerdict, ClassifyDiagnostics)> {
    if !(x_max >= 100.0) {
        return Err(Error::InvalidArgument(format!("X_max = {x_max} must be at least 100")));
    }
    validate_alpha(&*alpha.f, x_max)?;
    let inv = |x: f64| 1.0 / alpha.eval(x);
    let (partial_integral, integral_error) = integrate_gk(&inv, 0.0, x_max, 1e-10);
    let slope = log_log_slope(alpha, x_max);
    let from_tag = match alpha.tag {
        AsymptoticTag::Affine | AsymptoticTag::XLogIterates { .. } | AsymptoticTag::UserDivergent => {
            Some(PrimaryVerdict::PrimarilyComplete)
        }
        AsymptoticTag::Poly { degree } if degree <= 1.0 => Some(PrimaryVerdict::PrimarilyComplete),
        AsymptoticTag::Poly { .. } | AsymptoticTag::UserConvergent => Some(PrimaryVerdict::NotPrimarilyComplete),
        AsymptoticTag::Untagged => None,
    };
    let verdict = from_tag.unwrap_or(if slope <= 1.0 - SLOPE_EPSILON {
        PrimaryVerdict::PrimarilyComplete
    } else if slope >= 1.0 + SLOPE_EPSILON {
        PrimaryVerdict::NotPrimarilyComplete
    } else {
        PrimaryVerdict::Inconclusive
    });
    Ok((
        verdict,
        ClassifyDiagnostics {
            partial_integral,
            integral_error,
            slope,
            decided_by_tag: from_tag.is_some(),
        },
    ))
}

/// α = √(e − V₀) for a nonincreasing `V₀`; `e` defaults to `V₀(0) + 1`.
/// `v0_tag` describes the growth of `|V₀|`.
pub fn positively_complete_to_primary(
    v0: impl Fn(f64) -> f64 + Send + Sync + 'static,
    v0_tag: AsymptoticTag,
    e: Option<f64>,
    x_max: f64,
) -> Result<BoundingFunction> {
    let v00 = v0(0.0);
    let e = e.unwrap_or(v00 + 1.0);
    if !(e > v00) {
        return Err(Error::EnergyTooLow { e, v0: v00 });
    }
    let tag = match v0_tag {
        AsymptoticTag::Affine => AsymptoticTag::Poly { degree: 0.5 },
        AsymptoticTag::Poly { degree } if degree <= 2.0 => AsymptoticTag::Affine,
        AsymptoticTag::Poly { degree } => AsymptoticTag::Poly { degree: degree / 2.0 },
        AsymptoticTag::XLogIterates { .. } => AsymptoticTag::UserDivergent,
        _ => AsymptoticTag::Untagged,
    };
    BoundingFunction::new(
        move |x| (e - v0(x)).sqrt(),
        tag,
        format!("sqrt({e} - V0(x))"),
        x_max,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    PrimarilyBounded,
    UniformBound,
    AtMostLinear,
    AtMostLinearFiniteTimes,
    QuadraticPotentialBound,
    PositivelyCompleteBound,
    ProperMapBound,
}

/// What `|p|` means in a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DistanceProxy {
    ChartDistance { base: Vec<f64> },
    ArcLength,
    FunctionValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDescription {
    pub center: Vec<f64>,
    pub radius: f64,
    pub seed: u64,
    pub requested_samples: usize,
    pub valid_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub kind: CertificateKind,
    pub constants: BTreeMap<String, f64>,
    pub region: RegionDescription,
    pub proxy: DistanceProxy,
    /// Minimum slack of the bound over the samples.
    pub margin: f64,
    /// Log-log growth exponent of the sampled envelope.
    pub growth_exponent: f64,
}

impl GrowthCertificate {
    pub fn constant(&self, name: &str) -> f64 {
        self.constants.get(name).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub worst_point: Vec<f64>,
    /// `gauge / (1 + feature)` at the worst point.
    pub ratio: f64,
    pub growth_exponent: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum FitOutcome {
    Certified(GrowthCertificate),
    Failure(FitFailure),
}

impl FitOutcome {
    pub fn certificate(&self) -> Option<&GrowthCertificate> {
        match self {
            FitOutcome::Certified(c) => Some(c),
            FitOutcome::Failure(_) => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self, FitOutcome::Certified(_))
    }
}

/// A closed ball in chart coordinates, sampled on stratified radii
/// `r_k = R k / (n - 1)` with seeded random directions; every fourth sample
/// is taken along a coordinate axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Region {
            center,
            radius,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn samples(&self, n: usize) -> Vec<Vec<f64>> {
        let dim = self.center.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|k| {
                let r = if n > 1 {
                    self.radius * k as f64 / (n - 1) as f64
                } else {
                    0.0
                };
                if k % 4 == 3 {
                    // Every fourth sample lies on a coordinate axis.
                    let axis = (k / 4) % (2 * dim);
                    let mut d = vec![0.0; dim];
                    d[axis / 2] = if axis % 2 == 0 { 1.0 } else { -1.0 };
                    return self.center.iter().zip(&d).map(|(c, u)| c + r * u).collect();
                }
                let dir = loop {
                    let d: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-3 && norm <= 1.0 {
                        break d.into_iter().map(|x| x / norm).collect::<Vec<_>>();
                    }
                };
                self.center.iter().zip(&dir).map(|(c, u)| c + r * u).collect()
            })
            .collect()
    }

    pub fn distance(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn describe(&self, requested: usize, valid: usize) -> RegionDescription {
        RegionDescription {
            center: self.center.clone(),
            radius: self.radius,
            seed: self.seed,
            requested_samples: requested,
            valid_samples: valid,
        }
    }
}

/// Family of envelopes for [`fit_bounding_function`].
#[derive(Debug, Clone)]
pub enum FitFamily {
    /// `gauge ≤ C0 + C1 |p|`.
    Affine,
    /// `gauge ≤ C0 + C2 |p|²`.
    Quadratic,
    /// `gauge ≤ C α(|p|)`.
    AlphaScaled(BoundingFunction),
}

/// A sampled point with its feature (`|p|`, `|p|²`, `|f(p)|`) and gauge value.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSample {
    pub point: Vec<f64>,
    pub feature: f64,
    pub gauge: f64,
}

/// Minimal `(C0, C1) ≥ 0` minimising `C0 + C1 φ̄` with `g_i ≤ C0 + C1 φ_i`.
/// The optimum is a vertex of the feasible set, i.e. a line through two
/// upper-hull points or a line with `C0 = 0` or `C1 = 0`.
fn minimax_affine(phi: &[f64], g: &[f64]) -> (f64, f64) {
    let mean_phi = phi.iter().sum::<f64>() / phi.len() as f64;
    let g_max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let mut best = (g_max, 0.0);
    let mut best_obj = g_max;
    let mut consider = |c0: f64, c1: f64| {
        if c0 >= 0.0 && c1 >= 0.0 && c0.is_finite() && c1.is_finite() {
            let obj = c0 + c1 * mean_phi;
            if obj < best_obj {
                best_obj = obj;
                best = (c0, c1);
            }
        }
    };
    let through_origin = phi
        .iter()
        .zip(g)
        .filter(|(_, &gi)| gi > 0.0)
        .map(|(&p, &gi)| if p > 0.0 { gi / p } else { f64::INFINITY })
        .fold(0.0, f64::max);
    consider(0.0, through_origin);

    let mut pts: Vec<(f64, f64)> = phi.iter().cloned().zip(g.iter().cloned()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while let Some(&last) = hull.last() {
            if last.0 == p.0 {
                hull.pop();
                continue;
            }
            break;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    for w in hull.windows(2) {
        let c1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
        let c0 = w[0].1 - c1 * w[0].0;
        // Recompute the intercept so that both endpoints are covered.
        let c0 = c0.max(w[1].1 - c1 * w[1].0);
        consider(c0, c1);
    }
    best
}

/// Growth exponent of the sampled envelope: least-squares slope of
/// `ln max gauge` against `ln feature` over 10 bins covering the upper half
/// of the feature range.
pub fn envelope_exponent(samples: &[EnvelopeSample]) -> f64 {
    let f_max = samples.iter().map(|s| s.feature).fold(0.0, f64::max);
    if !(f_max > 0.0) {
        return 0.0;
    }
    let bins = 10;
    let lo = 0.5 * f_max;
    let mut env = vec![f64::NEG_INFINITY; bins];
    for s in samples.iter().filter(|s| s.feature >= lo) {
        let k = (((s.feature - lo) / (f_max - lo)) * bins as f64).floor() as usize;
        let k = k.min(bins - 1);
        env[k] = env[k].max(s.gauge);
    }
    let pts: Vec<(f64, f64)> = env
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0)
        .map(|(k, &e)| {
            let center = lo + (f_max - lo) * (k as f64 + 0.5) / bins as f64;
            (center.ln(), e.ln())
        })
        .collect();
    if pts.len() < 3 {
        return 0.0;
    }
    least_squares_slope(&pts)
}

fn worst_ratio(samples: &[EnvelopeSample]) -> (usize, f64) {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.gauge / (1.0 + s.feature)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
}

/// Fits `gauge ≤ C_const + C_slope · feature` over the samples.
/// Returns `FitFailure` when the envelope grows superlinearly in the feature.
pub fn fit_envelope(
    samples: &[EnvelopeSample],
    kind: CertificateKind,
    names: (&str, &str),
    region: RegionDescription,
    proxy: DistanceProxy,
) -> Result<FitOutcome> {
    if samples.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let exponent = envelope_exponent(samples);
    if exponent > SUPERLINEAR_THRESHOLD {
        let (i, ratio) = worst_ratio(samples);
        return Ok(FitOutcome::Failure(FitFailure {
            worst_point: samples[i].point.clone(),
            ratio,
            growth_exponent: exponent,
            reason: format!("sampled envelope grows like feature^{exponent:.3}"),
        }));
    }
    let phi: Vec<f64> = samples.iter().map(|s| s.feature).collect();
    let g: Vec<f64> = samples.iter().map(|s| s.gauge).collect();
    let (c1_fit, c0_fit) = {
        let (c0, c1) = minimax_affine(&phi, &g);
        (c1, c0)
    };
    let g_max = g.iter().cloned().fold(0.0, f64::max);
    let mut pad = 1e-12 * (1.0 + g_max);
    let (c0, margin) = loop {
        let c0 = c0_fit + pad;
        let margin = samples
            .iter()
            .map(|s| c0 + c1_fit * s.feature - s.gauge)
            .fold(f64::INFINITY, f64::min);
        if margin > 0.0 {
            break (c0, margin);
        }
        pad *= 2.0;
    };
    let mut constants = BTreeMap::new();
    constants.insert(names.0.to_string(), c0);
    constants.insert(names.1.to_string(), c1_fit);
    Ok(FitOutcome::Certified(GrowthCertificate {
        kind,
        constants,
        region,
        proxy,
        margin,
        growth_exponent: exponent,
    }))
}

/// Evaluates `gauge` at the region samples in parallel; points reported out
/// of domain are skipped.
fn sample_region(
    gauge: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    region: &Region,
    n_samples: usize,
) -> Result<Vec<(Vec<f64>, f64)>> {
    if n_samples < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n_samples,
            need: MIN_FIT_SAMPLES,
        });
    }
    if !(region.radius > 0.0) || region.center.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let points = region.samples(n_samples);
    let vals: Vec<Result<Option<f64>>> = points
        .par_iter()
        .map(|p| match gauge(p) {
            Ok(v) => Ok(Some(v)),
            Err(Error::OutOfDomain { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut out = Vec::with_capacity(n_samples);
    for (p, v) in points.into_iter().zip(vals) {
        if let Some(v) = v? {
            if !v.is_finite() {
                return Err(Error::Eval(format!("gauge is not finite at {p:?}")));
            }
            out.push((p, v.max(0.0)));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(out)
}

/// Fits a sampled bound for a nonnegative `gauge` over `region`.
pub fn fit_bounding_function(
    gauge: impl Fn(&[f64]) -> Result<f64> + Sync,
    region: &Region,
    family: &FitFamily,
    n_samples: usize,
) -> Result<FitOutcome> {
    let raw = sample_region(&gauge, region, n_samples)?;
    let desc = region.describe(n_samples, raw.len());
    let proxy = DistanceProxy::ChartDistance {
        base: region.center.clone(),
    };
    match family {
        FitFamily::Affine | FitFamily::Quadratic => {
            let quadratic = matches!(family, FitFamily::Quadratic);
            let samples: Vec<EnvelopeSample> = raw
                .into_iter()
                .map(|(p, g)| {
                    let d = region.distance(&p);
                    EnvelopeSample {
                        feature: if quadratic { d * d } else { d },
                        gauge: g,
                        point: p,
                    }
                })
                .collect();
            let (kind, names) = if quadratic {
                (CertificateKind::QuadraticPotentialBound, ("C0", "C2"))
            } else {
                (CertificateKind::AtMostLinear, ("C0", "C1"))
            };
            fit_envelope(&samples, kind, names, desc, proxy)
        }
        FitFamily::AlphaScaled(alpha) => {
            let ratios: Vec<f64> = raw
                .iter()
                .map(|(p, g)| g / alpha.eval(region.distance(p)))
                .collect();
            let c_fit = ratios.iter().cloned().fold(0.0, f64::max);
            let c = c_fit * (1.0 + 1e-12) + 1e-12;
            let margin = raw
                .iter()
                .map(|(p, g)| c * alpha.eval(region.distance(p)) - g)
                .fold(f64::INFINITY, f64::min);
            let mut constants = BTreeMap::new();
            constants.insert("C".to_string(), c);
            Ok(FitOutcome::Certified(GrowthCertificate {
                kind: CertificateKind::PrimarilyBounded,
                constants,
                region: desc,
                proxy,
                margin,
                growth_exponent: f64::NAN,
            }))
        }
    }
}

/// Certifies `|X_p(f)| ≤ C1 |f(p)| + C2` on sampled points of `region`.
pub fn check_proper_criterion(
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
    xf: impl Fn(&[f64]) -> Result<f64> + Sync,
    region: &Region,
    n_samples: usize,
) -> Result<FitOutcome> {
    let pair = |p: &[f64]| -> Result<f64> {
        if !f(p)?.is_finite() {
            return Err(Error::Eval(format!("f is not finite at {p:?}")));
        }
        Ok(xf(p)?.abs())
    };
    let raw = sample_region(&pair, region, n_samples)?;
    let desc = region.describe(n_samples, raw.len());
    let samples = raw
        .into_iter()
        .map(|(p, g)| {
            Ok(EnvelopeSample {
                feature: f(&p)?.abs(),
                gauge: g,
                point: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fit_envelope(
        &samples,
        CertificateKind::ProperMapBound,
        ("C2", "C1"),
        desc,
        DistanceProxy::FunctionValue,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FunctionTable {
        FunctionTable::new()
    }

    #[test]
    fn classify_examples() {
        let a = BoundingFunction::from_expression("1 + x", &table(), AsymptoticTag::Poly { degree: 1.0 }, 1000.0).unwrap();
        assert_eq!(classify_primarily_complete(&a, 1000.0).unwrap().0, PrimaryVerdict::PrimarilyComplete);
        let a = BoundingFunction::from_expression("1 + x^2", &table(), AsymptoticTag::Poly { degree: 2.0 }, 1000.0).unwrap();
        let (v, d) = classify_primarily_complete(&a, 1000.0).unwrap();
        assert_eq!(v, PrimaryVerdict::NotPrimarilyComplete);
        assert!((d.partial_integral - 1000f64.atan()).abs() < 1e-8);
        let a = BoundingFunction::from_expression("(x + e) * log(x + e)", &table(), AsymptoticTag::XLogIterates { k: 1 }, 1000.0)
            .unwrap();
        assert_eq!(classify_primarily_complete(&a, 1000.0).unwrap().0, PrimaryVerdict::PrimarilyComplete);
    }

    #[test]
    fn untagged_slope_policy() {
        let t = AsymptoticTag::Untagged;
        let sq = BoundingFunction::from_expression("sqrt(1 + x)", &table(), t, 1e4).unwrap();
        assert_eq!(classify_primarily_complete(&sq, 1e4).unwrap().0, PrimaryVerdict::PrimarilyComplete);
        let cube = BoundingFunction::from_expression("1 + x^3", &table(), t, 1e4).unwrap();
        assert_eq!(classify_primarily_complete(&cube, 1e4).unwrap().0, PrimaryVerdict::NotPrimarilyComplete);
        let lin = BoundingFunction::from_expression("1 + x", &table(), t, 1e4).unwrap();
        assert_eq!(classify_primarily_complete(&lin, 1e4).unwrap().0, PrimaryVerdict::Inconclusive);
        assert!(classify_primarily_complete(&lin, 10.0).is_err());
    }

    #[test]
    fn construction_rejects_bad_alpha() {
        assert!(matches!(
            BoundingFunction::from_expression("x - 1", &table(), AsymptoticTag::Untagged, 100.0),
            Err(Error::NonPositiveAlpha { .. })
        ));
        assert!(matches!(
            BoundingFunction::from_expression("2 + cos(x)", &table(), AsymptoticTag::Untagged, 100.0),
            Err(Error::NotNondecreasing { .. })
        ));
    }

    #[test]
    fn potentials_to_alpha() {
        let a = positively_complete_to_primary(|_| 0.0, AsymptoticTag::Poly { degree: 0.0 }, Some(1.0), 100.0).unwrap();
        assert_eq!(a.eval(37.0), 1.0);
        assert_eq!(classify_primarily_complete(&a, 100.0).unwrap().0, PrimaryVerdict::PrimarilyComplete);
        let a = positively_complete_to_primary(|s| -s * s, AsymptoticTag::Poly { degree: 2.0 }, None, 100.0).unwrap();
        assert!((a.eval(3.0) - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.tag(), AsymptoticTag::Affine);
        assert_eq!(classify_primarily_complete(&a, 100.0).unwrap().0, PrimaryVerdict::PrimarilyComplete);
        let a = positively_complete_to_primary(|s| -s.powi(4), AsymptoticTag::Poly { degree: 4.0 }, None, 100.0).unwrap();
        assert_eq!(classify_primarily_complete(&a, 100.0).unwrap().0, PrimaryVerdict::NotPrimarilyComplete);
        assert!(matches!(
            positively_complete_to_primary(|_| 2.0, AsymptoticTag::Untagged, Some(1.0), 100.0),
            Err(Error::EnergyTooLow { .. })
        ));
    }

    #[test]
    fn affine_fits() {
        let region = Region::ball(vec![0.0, 0.0], 5.0).with_seed(3);
        let c = fit_bounding_function(|_| Ok(2.5), &region, &FitFamily::Affine, 1000).unwrap();
        let c = c.certificate().unwrap();
        assert!((c.constant("C0") - 2.5).abs() < 1e-9 && c.constant("C1") == 0.0);
        assert!(c.margin > 0.0);

        let r2 = region.clone();
        let c = fit_bounding_function(move |p| Ok(1.0 + r2.distance(p)), &region, &FitFamily::Affine, 1000).unwrap();
        let c = c.certificate().unwrap();
        assert!((c.constant("C0") - 1.0).abs() < 1e-9, "{c:?}");
        assert!((c.constant("C1") - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_field_fails_affine_fit() {
        let region = Region::ball(vec![0.0], 10.0).with_seed(1);
        let out = fit_bounding_function(|p| Ok(p[0] * p[0]), &region, &FitFamily::Affine, 1000).unwrap();
        match out {
            FitOutcome::Failure(f) => {
                assert!((f.worst_point[0].abs() - 10.0).abs() < 1e-12);
                assert!((f.ratio - 100.0 / 11.0).abs() < 1e-9);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn proper_criterion_examples() {
        let region = Region::ball(vec![0.0, 0.0], 3.0).with_seed(2);
        let norm2 = |p: &[f64]| -> Result<f64> { Ok(p.iter().map(|x| x * x).sum()) };
        let c = check_proper_criterion(norm2, move |p| Ok(2.0 * norm2(p)?), &region, 1000).unwrap();
        let c = c.certificate().unwrap();
        assert!((c.constant("C1") - 2.0).abs() < 1e-9 && c.constant("C2").abs() < 1e-9);
        let c = check_proper_criterion(norm2, |_| Ok(0.0), &region, 1000).unwrap();
        let c = c.certificate().unwrap();
        assert!(c.constant("C1") == 0.0 && c.constant("C2") < 1e-9);
        let out = check_proper_criterion(norm2, move |p| Ok(norm2(p)?.exp()), &region, 1000).unwrap();
        match out {
            FitOutcome::Failure(f) => assert!((norm2(&f.worst_point).unwrap().sqrt() - 3.0).abs() < 1e-9),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn sample_count_enforced() {
        let region = Region::ball(vec![0.0], 1.0);
        assert!(matches!(
            fit_bounding_function(|_| Ok(1.0), &region, &FitFamily::Affine, 10),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn gauss_kronrod_accuracy() {
        let (v, _) = integrate_gk(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
