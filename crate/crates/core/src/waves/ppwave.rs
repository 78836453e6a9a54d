use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{compile, slot_x, BoundExpr, FunctionTable, NVARS, SLOT_T, SLOT_U, SLOT_V};
use crate::geom::attach_closed_form_christoffel;
use crate::geom::connection::christoffel_fast;
use crate::geom::domain::ChartDomain;
use crate::geom::metric::{MetricField, SmoothnessSource};
use crate::expr::CoordNames;
use crate::mechanics::energy::derivative_weights;
use crate::ode::{FnFlow, TrajectoryResult};

/// `H(u, x)`.
pub type ProfileFn = Arc<dyn Fn(f64, &[f64]) -> Result<f64> + Send + Sync>;

/// Wave profile of a plane wave: `H = Σ A_ij(u) xⁱ xʲ`.
#[derive(Debug, Clone)]
pub enum PlaneWaveProfile {
    Matrix(Vec<Vec<BoundExpr>>),
    /// 4D: `H = a(x² − y²) + 2bxy + c(x² + y²)`.
    Polarization { a: BoundExpr, b: BoundExpr, c: BoundExpr },
}

fn eval_in_u(e: &BoundExpr, u: f64) -> Result<f64> {
    let mut vars = [0.0; NVARS];
    vars[SLOT_U] = u;
    e.eval(&vars)
}

fn only_u(e: &BoundExpr) -> Result<()> {
    if (0..NVARS).any(|s| s != SLOT_U && e.uses_slot(s)) {
        return Err(Error::InvalidArgument(format!(
            "plane-wave profile '{}' may only depend on u",
            e.source()
        )));
    }
    Ok(())
}

impl PlaneWaveProfile {
    /// Checks that entries depend on `u` only and that `A` is symmetric on a sample of `u` values.
    pub fn validate(&self) -> Result<()> {
        match self {
            PlaneWaveProfile::Matrix(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::BadDimension(n + 2));
                }
                for row in rows {
                    for e in row {
                        only_u(e)?;
                    }
                }
                for k in 0..16 {
                    let u = -8.0 + k as f64;
                    let a = self.matrix_at(u)?;
                    let asym = (&a - a.transpose()).amax();
                    if asym > 1e-12 * (1.0 + a.amax()) {
                        return Err(Error::InvalidArgument(format!(
                            "profile matrix is not symmetric at u = {u} (|A - Aᵀ| = {asym:e})"
                        )));
                    }
                }
                Ok(())
            }
            PlaneWaveProfile::Polarization { a, b, c } => {
                for e in [a, b, c] {
                    only_u(e)?;
                }
                Ok(())
            }
        }
    }

    pub fn transverse_dim(&self) -> usize {
        match self {
            PlaneWaveProfile::Matrix(rows) => rows.len(),
            PlaneWaveProfile::Polarization { .. } => 2,
        }
    }

    pub fn matrix_at(&self, u: f64) -> Result<DMatrix<f64>> {
        match self {
            PlaneWaveProfile::Matrix(rows) => {
                let n = rows.len();
                let mut m = DMatrix::zeros(n, n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        m[(i, j)] = eval_in_u(e, u)?;
                    }
                }
                Ok(m)
            }
            PlaneWaveProfile::Polarization { a, b, c } => {
                let (a, b, c) = (eval_in_u(a, u)?, eval_in_u(b, u)?, eval_in_u(c, u)?);
                Ok(DMatrix::from_row_slice(2, 2, &[a + c, b, b, c - a]))
            }
        }
    }

    /// `H` evaluated from the polarization triple directly (4D) or from `A`.
    pub fn h_at(&self, u: f64, x: &[f64]) -> Result<f64> {
        match self {
            PlaneWaveProfile::Polarization { a, b, c } => {
                let (a, b, c) = (eval_in_u(a, u)?, eval_in_u(b, u)?, eval_in_u(c, u)?);
                let (x, y) = (x[0], x[1]);
                Ok(a * (x * x - y * y) + 2.0 * b * x * y + c * (x * x + y * y))
            }
            PlaneWaveProfile::Matrix(_) => {
                let m = self.matrix_at(u)?;
                let v = DVector::from_column_slice(x);
                Ok(v.dot(&(&m * &v)))
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            PlaneWaveProfile::Matrix(rows) => {
                let r: Vec<String> = rows
                    .iter()
                    .map(|row| row.iter().map(|e| e.source().to_string()).collect::<Vec<_>>().join(", "))
                    .collect();
                format!("A = [{}]", r.join("; "))
            }
            PlaneWaveProfile::Polarization { a, b, c } => {
                format!("a = {}, b = {}, c = {}", a.source(), b.source(), c.source())
            }
        }
    }
}

/// `g = −2 du dv + H(u, x) du² + g₀(x)` in coordinates `(u, v, x1, ...)`.
#[derive(Clone)]
pub struct PpWaveSpec {
    dim: usize,
    h: ProfileFn,
    h_source: String,
    transverse: Option<MetricField>,
}

impl fmt::Debug for PpWaveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PpWaveSpec")
            .field("dim", &self.dim)
            .field("H", &self.h_source)
            .field("transverse", &self.transverse.as_ref().map(|g| g.label().to_string()))
            .finish()
    }
}

impl PpWaveSpec {
    pub fn new(dim: usize, h: ProfileFn, h_source: impl Into<String>, transverse: Option<MetricField>) -> Result<Self> {
        if !(3..=crate::geom::domain::MAX_DIM).contains(&dim) {
            return Err(Error::BadDimension(dim));
        }
        if let Some(g0) = &transverse {
            if g0.dim() != dim - 2 || g0.signature() != 0 {
                return Err(Error::BadDimension(g0.dim() + 2));
            }
        }
        Ok(PpWaveSpec {
            dim,
            h,
            h_source: h_source.into(),
            transverse,
        })
    }

    /// `H` from an expression in `u, x1, ..., x(n-2)`.
    pub fn from_expression(dim: usize, h: &str, table: &FunctionTable) -> Result<Self> {
        let e = compile(h, table)?;
        if e.uses_slot(SLOT_V) || e.uses_slot(SLOT_T) {
            return Err(Error::InvalidArgument(format!("pp-wave profile '{h}' may not depend on v or t")));
        }
        for k in dim - 1..=8 {
            if k >= 1 && e.uses_slot(slot_x(k)) {
                return Err(Error::InvalidArgument(format!(
                    "pp-wave profile '{h}' uses x{k} but there are only {} transverse coordinates",
                    dim.saturating_sub(2)
                )));
            }
        }
        let source = e.source().to_string();
        Self::new(
            dim,
            Arc::new(move |u, x| {
                let mut vars = [0.0; NVARS];
                vars[SLOT_U] = u;
                for (k, xi) in x.iter().enumerate() {
                    vars[slot_x(k + 1)] = *xi;
                }
                e.eval(&vars)
            }),
            source,
            None,
        )
    }

    pub fn plane_wave(profile: PlaneWaveProfile) -> Result<Self> {
        profile.validate()?;
        let dim = profile.transverse_dim() + 2;
        let source = profile.describe();
        Self::new(dim, Arc::new(move |u, x| profile.h_at(u, x)), source, None)
    }

    pub fn with_transverse(mut self, g0: MetricField) -> Result<Self> {
        if g0.dim() != self.dim - 2 || g0.signature() != 0 {
            return Err(Error::BadDimension(g0.dim() + 2));
        }
        self.transverse = Some(g0);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h_source(&self) -> &str {
        &self.h_source
    }

    pub fn h(&self, u: f64, x: &[f64]) -> Result<f64> {
        (self.h)(u, x)
    }

    pub fn transverse(&self) -> Option<&MetricField> {
        self.transverse.as_ref()
    }

    /// Order-4 finite-difference `∂H/∂xᵏ`.
    pub fn h_gradient(&self, u: f64, x: &[f64]) -> Result<Vec<f64>> {
        let step = 1e-3 * (1.0 + x.iter().fold(0.0f64, |m, c| m.max(c.abs())));
        let mut q = x.to_vec();
        (0..x.len())
            .map(|k| {
                let mut at = |off: f64| {
                    q[k] = x[k] + off;
                    let r = self.h(u, &q);
                    q[k] = x[k];
                    r
                };
                let (f2, f1, m1, m2) = (at(2.0 * step)?, at(step)?, at(-step)?, at(-2.0 * step)?);
                Ok((8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * step))
            })
            .collect()
    }

    /// Transverse acceleration `u'² · ½ g₀⁻¹ ∂H − Γ₀(x', x')` of a geodesic.
    pub fn transverse_acceleration(&self, u: f64, u_dot: f64, x: &[f64], x_dot: &[f64]) -> Result<Vec<f64>> {
        let m = x.len();
        let dh = self.h_gradient(u, x)?;
        let mut a: Vec<f64> = match &self.transverse {
            None => dh.iter().map(|d| 0.5 * u_dot * u_dot * d).collect(),
            Some(g0) => {
                let gm = g0.raw(x)?;
                let inv = g0.inverse_of(&gm, x)?;
                (inv * DVector::from_vec(dh)).iter().map(|d| 0.5 * u_dot * u_dot * d).collect()
            }
        };
        if let Some(g0) = &self.transverse {
            let gamma = christoffel_fast(g0, x)?;
            for (k, ak) in a.iter_mut().enumerate() {
                for i in 0..m {
                    for j in 0..m {
                        *ak -= gamma[(k * m + i) * m + j] * x_dot[i] * x_dot[j];
                    }
                }
            }
        }
        Ok(a)
    }
}

/// `Γ^a_bc` flattened as `[a][b][c]`: `Γ^v_uu = −½∂_uH`, `Γ^v_ui = −½∂_iH`,
/// `Γ^i_uu = −½ g₀^{ij} ∂_jH`, plus the transverse symbols.
fn ppwave_christoffel(spec: &PpWaveSpec, p: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim;
    let m = n - 2;
    let (u, x) = (p[0], &p[2..]);
    let hu = {
        let h = 1e-3 * (1.0 + u.abs());
        let (f2, f1, m1, m2) = (spec.h(u + 2.0 * h, x)?, spec.h(u + h, x)?, spec.h(u - h, x)?, spec.h(u - 2.0 * h, x)?);
        (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h)
    };
    let dh = spec.h_gradient(u, x)?;
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut gamma = vec![0.0; n * n * n];
    gamma[idx(1, 0, 0)] = -0.5 * hu;
    for i in 0..m {
        gamma[idx(1, 0, i + 2)] = -0.5 * dh[i];
        gamma[idx(1, i + 2, 0)] = -0.5 * dh[i];
    }
    match &spec.transverse {
        None => {
            for i in 0..m {
                gamma[idx(i + 2, 0, 0)] = -0.5 * dh[i];
            }
        }
        Some(g0) => {
            let gm = g0.raw(x)?;
            let raised = g0.inverse_of(&gm, x)? * DVector::from_column_slice(&dh);
            for i in 0..m {
                gamma[idx(i + 2, 0, 0)] = -0.5 * raised[i];
            }
            let g0_gamma = christoffel_fast(g0, x)?;
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        gamma[idx(a + 2, b + 2, c + 2)] = g0_gamma[(a * m + b) * m + c];
                    }
                }
            }
        }
    }
    Ok(gamma)
}

/// Metric of a pp-wave, index 1, coordinates `(u, v, x1, ...)`, with closed-form
/// Christoffel symbols (cross-checked against finite differences near the origin).
pub fn build_ppwave(spec: &PpWaveSpec) -> Result<MetricField> {
    let n = spec.dim;
    let s = spec.clone();
    let g = MetricField::new(
        format!("pp-wave[H={}]", spec.h_source),
        ChartDomain::unbounded(n)?,
        1,
        SmoothnessSource::AnalyticExpression,
        CoordNames::Null,
        Arc::new(move |p| {
            let mut g = DMatrix::zeros(n, n);
            g[(0, 1)] = -1.0;
            g[(1, 0)] = -1.0;
            g[(0, 0)] = s.h(p[0], &p[2..])?;
            match &s.transverse {
                None => {
                    for i in 2..n {
                        g[(i, i)] = 1.0;
                    }
                }
                Some(g0) => {
                    let m = g0.raw(&p[2..])?;
                    for i in 0..n - 2 {
                        for j in 0..n - 2 {
                            g[(i + 2, j + 2)] = m[(i, j)];
                        }
                    }
                }
            }
            Ok(g)
        }),
    )?;
    let s = spec.clone();
    attach_closed_form_christoffel(g, Arc::new(move |p| ppwave_christoffel(&s, p)), &vec![0.0; n], 1.0, 0)
}

/// The transverse trajectory `x'' = u'² · ½∇H(u0 + u' t, x) − Γ₀(x', x')` in
/// the affine parameter, state `(x, x')`.
pub fn reduced_flow(spec: &PpWaveSpec, u0: f64, u_dot: f64) -> Result<FnFlow> {
    if u_dot == 0.0 {
        return Err(Error::LightlikeUOrbit);
    }
    let m = spec.dim - 2;
    let s = spec.clone();
    Ok(FnFlow::new(2 * m, move |t, y, dy| {
        let a = s.transverse_acceleration(u0 + u_dot * t, u_dot, &y[..m], &y[m..])?;
        dy[..m].copy_from_slice(&y[m..]);
        dy[m..].copy_from_slice(&a);
        Ok(())
    })
    .with_speed(move |_t, y| y[m..].iter().map(|c| c * c).sum::<f64>().sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    /// Max over interior samples of `|x'' − (u'² ½∇H − Γ₀(x',x'))|`, i.e. `u'²`
    /// times the residual of the reduced equation in the parameter `u`.
    pub residual: f64,
    /// `max |u'(t) − u'(0)|`.
    pub u_affinity_drift: f64,
    pub samples: usize,
}

/// Compares a pp-wave geodesic with the reduced Riemannian trajectory for `V = −H/2`.
pub fn geodesic_riemannian_reduction_check(spec: &PpWaveSpec, geodesic: &TrajectoryResult) -> Result<ReductionReport> {
    let n = spec.dim;
    let m = geodesic.times.len();
    if m < 10 {
        return Err(Error::TooFewSamples { got: m, need: 10 });
    }
    let u_dot0 = geodesic.states[0][n];
    if u_dot0.abs() < 1e-12 {
        return Err(Error::LightlikeUOrbit);
    }
    let u_affinity_drift = geodesic
        .states
        .iter()
        .map(|s| (s[n] - u_dot0).abs())
        .fold(0.0, f64::max);
    let t = &geodesic.times;
    let mut residual = 0.0f64;
    for i in 2..m - 2 {
        let w = derivative_weights(t[i], &t[i - 2..=i + 2]);
        let s = &geodesic.states[i];
        let expected = spec.transverse_acceleration(s[0], s[n], &s[2..n], &s[n + 2..])?;
        for (k, e) in expected.iter().enumerate() {
            let acc: f64 = (0..5).map(|j| w[j] * geodesic.states[i - 2 + j][n + 2 + k]).sum();
            residual = residual.max((acc - e).abs());
        }
    }
    Ok(ReductionReport {
        residual,
        u_affinity_drift,
        samples: m,
    })
}
