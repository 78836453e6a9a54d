//! Finite-difference Levi-Civita connection, curvature and covariant
//! derivatives of curvature.
//!
//! All derivatives use fourth-order central stencils. Nested derivatives use
//! progressively larger steps so that roundoff stays below truncation error.
//! Error estimates combine a step-halving discrepancy with a roundoff floor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::metric::MetricField;
use crate::geom::tensor::{multi_indices, TensorSample, Variance};

const CHRISTOFFEL_REL_STEP: f64 = 1e-4;
const CURVATURE_REL_STEP: f64 = 4e-3;
const FIRST_DERIVATIVE_REL_STEP: f64 = 1e-2;
const SECOND_DERIVATIVE_REL_STEP: f64 = 2e-2;
/// Noise gain of one stencil application: sum of |weights| / 12.
const STENCIL_GAIN: f64 = 1.5;

fn scale_of(p: &[f64]) -> f64 {
    1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Christoffel step `max(1e-4, 1e-4 (1 + |p|_inf))`.
pub fn christoffel_step(p: &[f64]) -> f64 {
    (CHRISTOFFEL_REL_STEP * scale_of(p)).max(CHRISTOFFEL_REL_STEP)
}

#[derive(Debug, Clone, Copy)]
struct Steps {
    gamma: f64,
    riemann: f64,
    d1: f64,
    d2: f64,
}

impl Steps {
    fn at(p: &[f64]) -> Self {
        let s = scale_of(p);
        Steps {
            gamma: christoffel_step(p),
            riemann: CURVATURE_REL_STEP * s,
            d1: FIRST_DERIVATIVE_REL_STEP * s,
            d2: SECOND_DERIVATIVE_REL_STEP * s,
        }
    }

    fn halved(self) -> Self {
        Steps {
            gamma: self.gamma / 2.0,
            riemann: self.riemann / 2.0,
            d1: self.d1 / 2.0,
            d2: self.d2 / 2.0,
        }
    }

    /// Roundoff floor after `levels` nested stencils applied to values of size `magnitude`.
    fn roundoff_floor(self, levels: usize, magnitude: f64) -> f64 {
        let hs = [self.gamma, self.riemann, self.d1, self.d2];
        let prod: f64 = hs[..levels].iter().product();
        4.0 * f64::EPSILON * (1.0 + magnitude) * STENCIL_GAIN.powi(levels as i32) / prod
    }
}

/// Fourth-order central derivative of a vector-valued map along coordinate `k`.
pub(crate) fn stencil<F>(f: &F, p: &[f64], k: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let mut q = p.to_vec();
    let mut at = |offset: f64| -> Result<Vec<f64>> {
        q[k] = p[k] + offset;
        f(&q)
    };
    let fp2 = at(2.0 * h)?;
    let fp1 = at(h)?;
    let fm1 = at(-h)?;
    let fm2 = at(-2.0 * h)?;
    Ok((0..fp1.len())
        .map(|i| (8.0 * (fp1[i] - fm1[i]) - (fp2[i] - fm2[i])) / (12.0 * h))
        .collect())
}

fn metric_flat(g: &MetricField, p: &[f64]) -> Result<Vec<f64>> {
    Ok(g.raw(p)?.as_slice().to_vec())
}

/// Magnitude used by roundoff floors: `max|g| * max(1, max|g^-1|)`.
fn metric_magnitude(g: &MetricField, p: &[f64]) -> Result<f64> {
    let m = g.raw(p)?;
    let inv = g.inverse_of(&m, p)?;
    Ok(m.amax() * inv.amax().max(1.0))
}

/// `Γ^a_bc` flattened as `[a][b][c]`, by differencing the metric with step `h`.
pub(crate) fn christoffel_with_step(g: &MetricField, p: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = g.dim();
    let gm = g.raw(p)?;
    let inv = g.inverse_of(&gm, p)?;
    // dg[k] = ∂_k g, column-major n×n (symmetric, so layout is irrelevant).
    let mut dg: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let d = stencil(&|q: &[f64]| metric_flat(g, q), p, k, h)?;
        dg.push(DMatrix::from_column_slice(n, n, &d));
    }
    // Lowered Γ_dbc = ½(∂_b g_dc + ∂_c g_db − ∂_d g_bc), for b ≤ c.
    let mut gamma = vec![0.0; n * n * n];
    let mut lowered = vec![0.0; n];
    for b in 0..n {
        for c in b..n {
            for (d, slot) in lowered.iter_mut().enumerate() {
                *slot = 0.5 * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]);
            }
            for a in 0..n {
                let mut s = 0.0;
                for (d, l) in lowered.iter().enumerate() {
                    s += inv[(a, d)] * l;
                }
                gamma[(a * n + b) * n + c] = s;
                gamma[(a * n + c) * n + b] = s;
            }
        }
    }
    Ok(gamma)
}

/// Christoffel symbols used by integrators: the validated closed form when one
/// is attached, finite differences otherwise.
pub fn christoffel_fast(g: &MetricField, p: &[f64]) -> Result<Vec<f64>> {
    match g.closed_form_christoffel() {
        Some(f) => f(&g.domain().reduce(p)),
        None => christoffel_with_step(g, p, christoffel_step(p)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelSample {
    /// `Γ^a_bc` flattened as `[a][b][c]`.
    pub components: Vec<f64>,
    pub dim: usize,
    pub estimated_fd_error: f64,
}

impl ChristoffelSample {
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.components[(a * self.dim + b) * self.dim + c]
    }
}

/// Finite-difference Christoffel symbols with a step-halving error estimate.
pub fn christoffel(g: &MetricField, p: &[f64]) -> Result<ChristoffelSample> {
    g.domain().check(p)?;
    let steps = Steps::at(p);
    let full = christoffel_with_step(g, p, steps.gamma)?;
    let half = christoffel_with_step(g, p, steps.gamma / 2.0)?;
    let discrepancy = max_diff(&full, &half);
    let floor = steps.halved().roundoff_floor(1, metric_magnitude(g, p)?);
    Ok(ChristoffelSample {
        components: full,
        dim: g.dim(),
        estimated_fd_error: discrepancy.max(floor),
    })
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `R^a_bcd = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb`, flattened `[a][b][c][d]`.
fn riemann_with_steps(g: &MetricField, p: &[f64], steps: Steps) -> Result<Vec<f64>> {
    let n = g.dim();
    let gamma_at = |q: &[f64]| christoffel_with_step(g, q, steps.gamma);
    let gm = gamma_at(p)?;
    let dgamma: Vec<Vec<f64>> = (0..n)
        .map(|k| stencil(&gamma_at, p, k, steps.riemann))
        .collect::<Result<_>>()?;
    let gi = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut r = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in (c + 1)..n {
                    let mut v = dgamma[c][gi(a, d, b)] - dgamma[d][gi(a, c, b)];
                    for e in 0..n {
                        v += gm[gi(a, c, e)] * gm[gi(e, d, b)] - gm[gi(a, d, e)] * gm[gi(e, c, b)];
                    }
                    r[((a * n + b) * n + c) * n + d] = v;
                    r[((a * n + b) * n + d) * n + c] = -v;
                }
            }
        }
    }
    Ok(r)
}

const RIEMANN_VARIANCE: [Variance; 4] = [Variance::Up, Variance::Down, Variance::Down, Variance::Down];

/// Riemann tensor `R^a_bcd` at `p`.
pub fn curvature_tensor(g: &MetricField, p: &[f64]) -> Result<TensorSample> {
    g.domain().check(p)?;
    let steps = Steps::at(p);
    let full = riemann_with_steps(g, p, steps)?;
    let half = riemann_with_steps(g, p, steps.halved())?;
    let floor = steps.halved().roundoff_floor(2, metric_magnitude(g, p)?);
    Ok(TensorSample {
        point: p.to_vec(),
        dim: g.dim(),
        layout: "R^a_bcd".into(),
        variance: RIEMANN_VARIANCE.to_vec(),
        estimated_fd_error: max_diff(&full, &half).max(floor),
        components: full,
    })
}

/// Fully lowered `R_abcd = g_ae R^e_bcd`.
pub fn lowered_curvature(g: &MetricField, p: &[f64]) -> Result<TensorSample> {
    let up = curvature_tensor(g, p)?;
    let n = g.dim();
    let gm = g.raw(p)?;
    let mut comps = vec![0.0; up.components.len()];
    for (flat, idx) in multi_indices(n, 4).enumerate() {
        let mut s = 0.0;
        for e in 0..n {
            s += gm[(idx[0], e)] * up.get(&[e, idx[1], idx[2], idx[3]]);
        }
        comps[flat] = s;
    }
    let scale = gm.amax().max(1.0);
    Ok(TensorSample {
        layout: "R_abcd".into(),
        variance: vec![Variance::Down; 4],
        components: comps,
        estimated_fd_error: up.estimated_fd_error * scale * n as f64,
        ..up
    })
}

/// Ricci tensor `R_bd = R^a_bad`.
pub fn ricci(g: &MetricField, p: &[f64]) -> Result<TensorSample> {
    let r = curvature_tensor(g, p)?;
    let n = g.dim();
    let mut comps = vec![0.0; n * n];
    for b in 0..n {
        for d in 0..n {
            comps[b * n + d] = (0..n).map(|a| r.get(&[a, b, a, d])).sum();
        }
    }
    Ok(TensorSample {
        layout: "Ric_bd".into(),
        variance: vec![Variance::Down; 2],
        components: comps,
        estimated_fd_error: r.estimated_fd_error * n as f64,
        ..r
    })
}

/// `∇_e T`, with the derivative index appended last.
fn covariant_derivative<F>(
    g: &MetricField,
    field: &F,
    variance: &[Variance],
    p: &[f64],
    h: f64,
    h_gamma: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = g.dim();
    let rank = variance.len();
    let t = field(p)?;
    let gm = christoffel_with_step(g, p, h_gamma)?;
    let partials: Vec<Vec<f64>> = (0..n).map(|e| stencil(field, p, e, h)).collect::<Result<_>>()?;
    let gi = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let flat = |idx: &[usize]| idx.iter().fold(0, |acc, &i| acc * n + i);
    let mut out = vec![0.0; t.len() * n];
    for (ti, idx) in multi_indices(n, rank).enumerate() {
        let mut probe = idx.clone();
        for e in 0..n {
            let mut v = partials[e][ti];
            for (k, var) in variance.iter().enumerate() {
                for f in 0..n {
                    probe[k] = f;
                    let tf = t[flat(&probe)];
                    match var {
                        Variance::Up => v += gm[gi(idx[k], e, f)] * tf,
                        Variance::Down => v -= gm[gi(f, e, idx[k])] * tf,
                    }
                }
                probe[k] = idx[k];
            }
            out[ti * n + e] = v;
        }
    }
    Ok(out)
}

fn nabla_riemann(g: &MetricField, p: &[f64], steps: Steps) -> Result<Vec<f64>> {
    let field = |q: &[f64]| riemann_with_steps(g, q, steps);
    covariant_derivative(g, &field, &RIEMANN_VARIANCE, p, steps.d1, steps.gamma)
}

fn nabla2_riemann(g: &MetricField, p: &[f64], steps: Steps) -> Result<Vec<f64>> {
    let field = |q: &[f64]| nabla_riemann(g, q, steps);
    let mut variance = RIEMANN_VARIANCE.to_vec();
    variance.push(Variance::Down);
    covariant_derivative(g, &field, &variance, p, steps.d2, steps.gamma)
}

/// `∇R` (r = 1, layout `R^a_bcd;e`) or `∇∇R` (r = 2, layout `R^a_bcd;ef`).
pub fn covariant_curvature_derivative(g: &MetricField, p: &[f64], r: usize) -> Result<TensorSample> {
    g.domain().check(p)?;
    let steps = Steps::at(p);
    let (full, half, layout) = match r {
        1 => (
            nabla_riemann(g, p, steps)?,
            nabla_riemann(g, p, steps.halved())?,
            "R^a_bcd;e",
        ),
        2 => (
            nabla2_riemann(g, p, steps)?,
            nabla2_riemann(g, p, steps.halved())?,
            "R^a_bcd;ef",
        ),
        _ => return Err(Error::InvalidArgument(format!("derivative order {r} not in {{1, 2}}"))),
    };
    let floor = steps.halved().roundoff_floor(2 + r, metric_magnitude(g, p)?);
    let mut variance = RIEMANN_VARIANCE.to_vec();
    variance.extend(std::iter::repeat_n(Variance::Down, r));
    Ok(TensorSample {
        point: p.to_vec(),
        dim: g.dim(),
        layout: layout.into(),
        variance,
        estimated_fd_error: max_diff(&full, &half).max(floor),
        components: full,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub error: f64,
}

/// Max absolute component of `∇^r R` with its error estimate.
///
/// Fails with `FdUnstable` when the step-halving discrepancy exceeds both the
/// returned value and the roundoff floor.
pub fn covariant_curvature_derivative_norm(g: &MetricField, p: &[f64], r: usize) -> Result<NormEstimate> {
    g.domain().check(p)?;
    let steps = Steps::at(p);
    let (full, half) = match r {
        1 => (nabla_riemann(g, p, steps)?, nabla_riemann(g, p, steps.halved())?),
        2 => (nabla2_riemann(g, p, steps)?, nabla2_riemann(g, p, steps.halved())?),
        _ => return Err(Error::InvalidArgument(format!("derivative order {r} not in {{1, 2}}"))),
    };
    let value = full.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let discrepancy = max_diff(&full, &half);
    let floor = steps.halved().roundoff_floor(2 + r, metric_magnitude(g, p)?);
    if discrepancy > value.max(floor) {
        return Err(Error::FdUnstable { value, discrepancy });
    }
    Ok(NormEstimate {
        value,
        error: discrepancy.max(floor),
    })
}
