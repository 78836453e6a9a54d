//! Finsler metrics given by `F²(x, v)`, their fundamental tensor and the
//! Euler–Lagrange trajectories of `L = ½F² − V`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, slot_x, FunctionTable, NVARS, SLOT_T};
use crate::geom::domain::ChartDomain;
use crate::geom::metric::{bilinear, MetricField};
use crate::mechanics::problem::{potential_differential_fd, ScalarFieldFn};
use crate::ode::{integrate, FlowSystem, IntegratorOptions, TrajectoryResult};

pub type FinslerSquareFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync>;

/// Largest dimension for expression-backed Finsler metrics (positions and
/// velocities share the eight coordinate slots).
pub const MAX_FINSLER_EXPR_DIM: usize = 4;
/// Relative convexity threshold on the fundamental tensor.
pub const CONVEXITY_TOL: f64 = 1e-8;

#[derive(Clone)]
pub struct FinslerMetricField {
    label: String,
    domain: ChartDomain,
    f_sq: FinslerSquareFn,
}

impl fmt::Debug for FinslerMetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerMetricField")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .finish()
    }
}

impl FinslerMetricField {
    pub fn new(label: impl Into<String>, domain: ChartDomain, f_sq: FinslerSquareFn) -> Self {
        FinslerMetricField {
            label: label.into(),
            domain,
            f_sq,
        }
    }

    /// `F² = g(v, v)`.
    pub fn from_riemannian(g: MetricField) -> Self {
        let domain = g.domain().clone();
        let label = format!("riemannian({})", g.label());
        FinslerMetricField::new(
            label,
            domain,
            Arc::new(move |x, v| {
                let m = g.raw(x)?;
                Ok(bilinear(&m, v, v))
            }),
        )
    }

    /// `F² = √Σ vᵢ⁴` on ℝⁿ.
    pub fn quartic(dim: usize) -> Result<Self> {
        Ok(FinslerMetricField::new(
            "quartic",
            ChartDomain::unbounded(dim)?,
            Arc::new(|_x, v| Ok(v.iter().map(|c| c.powi(4)).sum::<f64>().sqrt())),
        ))
    }

    /// `F² = g(v,v) + ε Σ vᵢ⁴ / g(v,v)`.
    pub fn perturbed_quartic(g: MetricField, eps: f64) -> Self {
        let domain = g.domain().clone();
        FinslerMetricField::new(
            format!("perturbed-quartic({}, {eps})", g.label()),
            domain,
            Arc::new(move |x, v| {
                let m = g.raw(x)?;
                let q = bilinear(&m, v, v);
                if q == 0.0 {
                    return Ok(0.0);
                }
                Ok(q + eps * v.iter().map(|c| c.powi(4)).sum::<f64>() / q)
            }),
        )
    }

    /// `F²` from an expression in `x1..xn` (position) and `v1..vn` (velocity).
    pub fn from_expression(label: &str, domain: ChartDomain, f_sq: &str, table: &FunctionTable) -> Result<Self> {
        let n = domain.dim();
        if n > MAX_FINSLER_EXPR_DIM {
            return Err(Error::BadDimension(n));
        }
        let mut e = parse_expression(f_sq)?;
        for k in 1..=n {
            e = e.rename(&format!("v{k}"), &format!("x{}", n + k));
        }
        let bound = e.bind(table)?;
        if bound.uses_slot(SLOT_T) {
            return Err(Error::InvalidArgument("Finsler metrics may not depend on t".into()));
        }
        Ok(FinslerMetricField::new(
            label,
            domain,
            Arc::new(move |x, v| {
                let mut vars = [0.0; NVARS];
                for k in 0..n {
                    vars[slot_x(k + 1)] = x[k];
                    vars[slot_x(n + k + 1)] = v[k];
                }
                bound.eval(&vars)
            }),
        ))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn f_squared(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        (self.f_sq)(x, v)
    }

    pub fn norm(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.f_squared(x, v)?.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalTensor {
    pub h: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

fn velocity_step(v: &[f64]) -> f64 {
    2e-3 * v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn position_step(x: &[f64]) -> f64 {
    1e-3 * (1.0 + x.iter().fold(0.0f64, |m, c| m.max(c.abs())))
}

/// Order-4 first derivative of `f` along coordinate `k`.
fn d1(f: &dyn Fn(&[f64]) -> Result<f64>, p: &[f64], k: usize, h: f64) -> Result<f64> {
    let mut q = p.to_vec();
    let mut at = |off: f64| {
        q[k] = p[k] + off;
        f(&q)
    };
    let (f2, f1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
    Ok((8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h))
}

/// Order-4 Hessian of `½F²` in `v`, symmetrised, with its smallest eigenvalue.
pub fn fundamental_tensor(fm: &FinslerMetricField, x: &[f64], v: &[f64]) -> Result<FundamentalTensor> {
    let n = fm.dim();
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    fm.domain().check(x)?;
    let h = velocity_step(v);
    let half = |w: &[f64]| -> Result<f64> { Ok(0.5 * fm.f_squared(x, w)?) };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut w = v.to_vec();
        let mut at = |off: f64| {
            w[i] = v[i] + off;
            half(&w)
        };
        let (f2, f1, f0, m1, m2) = (at(2.0 * h)?, at(h)?, at(0.0)?, at(-h)?, at(-2.0 * h)?);
        m[(i, i)] = (16.0 * ((f1 - f0) + (m1 - f0)) - ((f2 - f0) + (m2 - f0))) / (12.0 * h * h);
        for j in 0..i {
            let dj = |w: &[f64]| d1(&half, w, j, h);
            let mij = d1(&dj, v, i, h)?;
            m[(i, j)] = mij;
            m[(j, i)] = mij;
        }
    }
    if m.iter().any(|c| !c.is_finite()) {
        return Err(Error::Eval(format!("fundamental tensor is not finite at x = {x:?}, v = {v:?}")));
    }
    let min_eigenvalue = m.clone().symmetric_eigenvalues().min();
    let threshold = CONVEXITY_TOL * m.trace() / n as f64;
    if !(min_eigenvalue > threshold) {
        return Err(Error::NotStronglyConvex {
            min_eigenvalue,
            threshold,
        });
    }
    Ok(FundamentalTensor { h: m, min_eigenvalue })
}

/// Solves `h_v a = ∂ₓL − (∂²L/∂v∂x) v` for `L = ½F² − V(x, t)`.
pub fn finsler_trajectory_rhs(
    fm: &FinslerMetricField,
    potential: Option<&ScalarFieldFn>,
    t: f64,
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let n = fm.dim();
    let ft = fundamental_tensor(fm, x, v)?;
    let hx = position_step(x);
    let hv = velocity_step(v);
    let half_at = |xx: &[f64], vv: &[f64]| -> Result<f64> { Ok(0.5 * fm.f_squared(xx, vv)?) };
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        rhs[i] = d1(&|xx: &[f64]| half_at(xx, v), x, i, hx)?;
    }
    // (∂²L/∂vᵢ∂xⱼ) vʲ = ∂/∂vᵢ of the directional x-derivative along v.
    for i in 0..n {
        let dir = |vv: &[f64]| -> Result<f64> {
            let mut s = 0.0;
            for j in 0..n {
                if v[j] != 0.0 {
                    s += v[j] * d1(&|xx: &[f64]| half_at(xx, vv), x, j, hx)?;
                }
            }
            Ok(s)
        };
        rhs[i] -= d1(&dir, v, i, hv)?;
    }
    if let Some(pot) = potential {
        let dv = potential_differential_fd(pot, x, t)?;
        for i in 0..n {
            rhs[i] -= dv[i];
        }
    }
    let a = ft
        .h
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotStronglyConvex {
            min_eigenvalue: ft.min_eigenvalue,
            threshold: 0.0,
        })?;
    Ok(a.as_slice().to_vec())
}

/// Euler–Lagrange flow on the slit tangent bundle, speed `F(v)`.
pub struct FinslerFlow<'a> {
    pub metric: &'a FinslerMetricField,
    pub potential: Option<&'a ScalarFieldFn>,
}

impl FlowSystem for FinslerFlow<'_> {
    fn state_dim(&self) -> usize {
        2 * self.metric.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.metric.dim();
        let a = finsler_trajectory_rhs(self.metric, self.potential, t, &y[..n], &y[n..])?;
        dy[..n].copy_from_slice(&y[n..]);
        dy[n..].copy_from_slice(&a);
        Ok(())
    }

    fn inside(&self, y: &[f64]) -> bool {
        self.metric.domain().contains(&y[..self.metric.dim()])
    }

    fn speed(&self, _t: f64, y: &[f64]) -> f64 {
        let n = self.metric.dim();
        self.metric.norm(&y[..n], &y[n..]).unwrap_or(f64::INFINITY)
    }
}

/// Integrates a Finsler trajectory; the ledger gains `finsler_speed` = `F(γ')`.
pub fn solve_finsler(
    fm: &FinslerMetricField,
    potential: Option<&ScalarFieldFn>,
    t0: f64,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<TrajectoryResult> {
    let n = fm.dim();
    let mut s0 = x0.to_vec();
    s0.extend_from_slice(v0);
    let flow = FinslerFlow {
        metric: fm,
        potential,
    };
    let mut r = integrate(&flow, t0, &s0, horizon, opts)?;
    let speeds = r
        .states
        .iter()
        .map(|s| fm.norm(&s[..n], &s[n..]))
        .collect::<Result<Vec<_>>>()?;
    r.push_ledger("finsler_speed", speeds);
    Ok(r)
}
