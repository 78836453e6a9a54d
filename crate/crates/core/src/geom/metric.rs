use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{BoundExpr, CoordNames};
use crate::geom::domain::{ChartDomain, Interval};

pub type MetricFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
/// Closed-form Christoffel symbols, flattened as `[a][b][c]` for `Γ^a_bc`.
pub type ChristoffelFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothnessSource {
    AnalyticExpression,
    BuiltinClosedForm,
}

/// Pseudo-Riemannian metric on a chart, evaluated pointwise.
#[derive(Clone)]
pub struct MetricField {
    label: String,
    domain: ChartDomain,
    signature: usize,
    source: SmoothnessSource,
    names: CoordNames,
    eval: MetricFn,
    closed_form: Option<ChristoffelFn>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("label", &self.label)
            .field("dim", &self.domain.dim())
            .field("signature", &self.signature)
            .field("source", &self.source)
            .finish_non_exhaustive()
    }
}

impl MetricField {
    pub fn new(
        label: impl Into<String>,
        domain: ChartDomain,
        signature: usize,
        source: SmoothnessSource,
        names: CoordNames,
        eval: MetricFn,
    ) -> Result<Self> {
        if signature > domain.dim() {
            return Err(Error::InvalidArgument(format!(
                "index {signature} exceeds dimension {}",
                domain.dim()
            )));
        }
        Ok(MetricField {
            label: label.into(),
            domain,
            signature,
            source,
            names,
            eval,
            closed_form: None,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn signature(&self) -> usize {
        self.signature
    }

    pub fn source(&self) -> SmoothnessSource {
        self.source
    }

    pub fn names(&self) -> CoordNames {
        self.names
    }

    pub fn closed_form_christoffel(&self) -> Option<&ChristoffelFn> {
        self.closed_form.as_ref()
    }

    pub(crate) fn set_closed_form(&mut self, f: ChristoffelFn) {
        self.closed_form = Some(f);
    }

    /// Evaluates the matrix without bounds or nondegeneracy checks.
    /// Periodic coordinates are reduced first. Used by finite-difference stencils,
    /// which may step slightly past an open boundary.
    pub fn raw(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let q = self.domain.reduce(p);
        let g = (self.eval)(&q)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        Ok(g)
    }

    /// Inverse of `g` at `p`, or `DegenerateMetric`.
    pub fn inverse_of(&self, g: &DMatrix<f64>, p: &[f64]) -> Result<DMatrix<f64>> {
        let scaled_det = scaled_determinant(g);
        if !(scaled_det.abs() > DEGENERACY_TOL) {
            return Err(Error::DegenerateMetric {
                point: p.to_vec(),
                scaled_det,
            });
        }
        g.clone().try_inverse().ok_or(Error::DegenerateMetric {
            point: p.to_vec(),
            scaled_det,
        })
    }

    /// Metric matrix at `p`, validated for symmetry, nondegeneracy and index.
    pub fn metric_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if p.len() != self.dim() {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        let q = self.domain.check(p)?;
        let g = (self.eval)(&q)?;
        validate_matrix(&g, p, self.signature)?;
        Ok(g)
    }

    /// `g(a, b)` at `p` without validation.
    pub fn inner(&self, p: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let g = self.raw(p)?;
        Ok(bilinear(&g, a, b))
    }
}

pub fn bilinear(g: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let n = g.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * a[i] * b[j];
        }
    }
    s
}

/// Determinant after scaling each row by its largest absolute entry.
pub fn scaled_determinant(g: &DMatrix<f64>) -> f64 {
    let mut m = g.clone();
    for mut row in m.row_iter_mut() {
        let s = row.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if s > 0.0 {
            row /= s;
        }
    }
    m.determinant()
}

/// Index of `g`, computed on the congruent matrix `D g D` with `D_ii = 1/√(max_j |g_ij|)`,
/// which has the same inertia but a far smaller spread of eigenvalues.
pub fn count_negative_eigenvalues(g: &DMatrix<f64>) -> usize {
    let mut sym = (g + g.transpose()) * 0.5;
    let d: Vec<f64> = sym
        .row_iter()
        .map(|r| {
            let s = r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..sym.nrows() {
        for j in 0..sym.ncols() {
            sym[(i, j)] *= d[i] * d[j];
        }
    }
    sym.symmetric_eigenvalues().iter().filter(|&&l| l < 0.0).count()
}

pub fn validate_matrix(g: &DMatrix<f64>, p: &[f64], signature: usize) -> Result<()> {
    let scale = 1.0 + g.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let asym = (g - g.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::AsymmetricMetric {
            point: p.to_vec(),
            asymmetry: asym,
        });
    }
    let scaled_det = scaled_determinant(g);
    if !(scaled_det.abs() > DEGENERACY_TOL) {
        return Err(Error::DegenerateMetric {
            point: p.to_vec(),
            scaled_det,
        });
    }
    let found = count_negative_eigenvalues(g);
    if found != signature {
        return Err(Error::SignatureMismatch {
            point: p.to_vec(),
            declared: signature,
            found,
        });
    }
    Ok(())
}

pub fn euclidean(dim: usize) -> Result<MetricField> {
    let domain = ChartDomain::unbounded(dim)?;
    MetricField::new(
        "euclidean",
        domain,
        0,
        SmoothnessSource::BuiltinClosedForm,
        CoordNames::Generic,
        Arc::new(move |_p| Ok(DMatrix::identity(dim, dim))),
    )
}

/// `diag(-1, 1, ..., 1)`.
pub fn minkowski(dim: usize) -> Result<MetricField> {
    let domain = ChartDomain::unbounded(dim)?;
    MetricField::new(
        "minkowski",
        domain,
        1,
        SmoothnessSource::BuiltinClosedForm,
        CoordNames::Generic,
        Arc::new(move |_p| {
            let mut g = DMatrix::identity(dim, dim);
            g[(0, 0)] = -1.0;
            Ok(g)
        }),
    )
}

/// `2 dx dy + τ(x) dy²` on the unit-periodic torus, coordinates `(x1, x2)`.
pub fn torus_lorentz(tau: BoundExpr) -> Result<MetricField> {
    let domain = ChartDomain::new(vec![Interval::UNBOUNDED; 2], vec![Some(1.0), Some(1.0)])?;
    MetricField::new(
        format!("torus-lorentz[tau={}]", tau.source()),
        domain,
        1,
        SmoothnessSource::AnalyticExpression,
        CoordNames::Generic,
        Arc::new(move |p| {
            let tau_x = tau.eval(&CoordNames::Generic.vars(p, 0.0))?;
            Ok(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, tau_x]))
        }),
    )
}

/// `2 du dv` on `u > 0`, coordinates `(u, v)`.
pub fn half_plane() -> Result<MetricField> {
    let domain = ChartDomain::new(vec![Interval::above(0.0), Interval::UNBOUNDED], vec![None, None])?;
    MetricField::new(
        "half-plane",
        domain,
        1,
        SmoothnessSource::BuiltinClosedForm,
        CoordNames::Null,
        Arc::new(|_p| Ok(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))),
    )
}

/// Metric from a symmetric matrix of component expressions (upper triangle is read).
pub fn from_components(
    label: impl Into<String>,
    domain: ChartDomain,
    signature: usize,
    names: CoordNames,
    components: Vec<Vec<BoundExpr>>,
) -> Result<MetricField> {
    let n = domain.dim();
    if components.len() != n || components.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument(format!(
            "metric components must be a {n}x{n} matrix"
        )));
    }
    MetricField::new(
        label,
        domain,
        signature,
        SmoothnessSource::AnalyticExpression,
        names,
        Arc::new(move |p| {
            let vars = names.vars(p, 0.0);
            let mut g = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let x = components[i][j].eval(&vars)?;
                    g[(i, j)] = x;
                    g[(j, i)] = x;
                }
            }
            Ok(g)
        }),
    )
}
