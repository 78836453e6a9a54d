use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::connection::curvature_tensor;
use crate::geom::metric::MetricField;

/// Pass threshold in units of the finite-difference error estimate.
pub const PP_TOLERANCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpPointResult {
    pub point: Vec<f64>,
    pub max_component: f64,
    pub fd_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpConditionReport {
    pub max_component: f64,
    /// Largest error estimate over the points.
    pub fd_error: f64,
    pub passes: bool,
    pub points: Vec<PpPointResult>,
}

/// Basis of `{W : g(V, W) = 0}`, orthonormalized in the chart's Euclidean
/// inner product. Contains `V` itself when `V` is lightlike.
pub fn orthogonal_basis(g: &MetricField, p: &[f64], v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = g.dim();
    let omega = g.raw(p)? * DVector::from_column_slice(v);
    let k = omega.iamax();
    if omega[k] == 0.0 {
        return Err(Error::ZeroV { point: p.to_vec() });
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| i != k) {
        let mut w = DVector::zeros(n);
        w[i] = 1.0;
        w[k] = -omega[i] / omega[k];
        for b in &basis {
            let proj = w.dot(b);
            w -= b * proj;
        }
        let norm = w.norm();
        basis.push(w / norm);
    }
    Ok(basis.into_iter().map(|w| w.as_slice().to_vec()).collect())
}

/// Max over `points` and over basis pairs `U, W` of `V^⊥` of `|R^a_bcd Uᶜ Wᵈ|`.
pub fn check_pp_curvature_condition<V>(g: &MetricField, v_field: V, points: &[Vec<f64>]) -> Result<PpConditionReport>
where
    V: Fn(&[f64]) -> Vec<f64>,
{
    let n = g.dim();
    let mut results = Vec::with_capacity(points.len());
    for p in points {
        let v = v_field(p);
        if v.iter().all(|c| *c == 0.0) {
            return Err(Error::ZeroV { point: p.clone() });
        }
        let basis = orthogonal_basis(g, p, &v)?;
        let r = curvature_tensor(g, p)?;
        let mut worst = 0.0f64;
        for (i, uu) in basis.iter().enumerate() {
            for ww in &basis[i + 1..] {
                for a in 0..n {
                    for b in 0..n {
                        let mut s = 0.0;
                        for c in 0..n {
                            for d in 0..n {
                                s += r.get(&[a, b, c, d]) * uu[c] * ww[d];
                            }
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        // Unit basis vectors: each contraction sums at most n² error-sized terms.
        results.push(PpPointResult {
            point: p.clone(),
            max_component: worst,
            fd_error: r.estimated_fd_error * (n * n) as f64,
        });
    }
    let max_component = results.iter().map(|r| r.max_component).fold(0.0, f64::max);
    let fd_error = results.iter().map(|r| r.fd_error).fold(0.0, f64::max);
    Ok(PpConditionReport {
        max_component,
        fd_error,
        passes: results.iter().all(|r| r.max_component <= PP_TOLERANCE_FACTOR * r.fd_error),
        points: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{compile, FunctionTable};
    use crate::geom::metric::{minkowski, torus_lorentz};
    use crate::waves::ppwave::{build_ppwave, PpWaveSpec};

    fn pts(n: usize) -> Vec<Vec<f64>> {
        (0..4).map(|k| (0..n).map(|i| 0.3 * (k + i) as f64 - 0.4).collect()).collect()
    }

    #[test]
    fn ppwave_passes() {
        let spec = PpWaveSpec::from_expression(4, "x1^4 + sin(u)*x1*x2 - x2^2", &FunctionTable::new()).unwrap();
        let g = build_ppwave(&spec).unwrap();
        let rep = check_pp_curvature_condition(&g, |_| vec![0.0, 1.0, 0.0, 0.0], &pts(4)).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert_eq!(rep.points.len(), 4);
    }

    #[test]
    fn lightlike_vector_in_own_complement() {
        let spec = PpWaveSpec::from_expression(3, "x1^2", &FunctionTable::new()).unwrap();
        let g = build_ppwave(&spec).unwrap();
        let p = [0.1, 0.2, 0.7];
        let v = [0.0, 1.0, 0.0];
        let basis = orthogonal_basis(&g, &p, &v).unwrap();
        assert_eq!(basis.len(), 2);
        for w in &basis {
            assert!(g.inner(&p, &v, w).unwrap().abs() < 1e-14);
        }
        // ∂_v lies in the span.
        let span: f64 = basis.iter().map(|w| w[1] * w[1]).sum();
        assert!((span - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minkowski_is_trivially_pp() {
        let rep = check_pp_curvature_condition(&minkowski(3).unwrap(), |_| vec![1.0, 1.0, 0.0], &pts(3)).unwrap();
        assert!(rep.passes);
        assert!(rep.max_component <= 10.0 * rep.fd_error);
    }

    #[test]
    fn zero_field_rejected() {
        let g = minkowski(3).unwrap();
        assert!(matches!(
            check_pp_curvature_condition(&g, |_| vec![0.0; 3], &pts(3)),
            Err(Error::ZeroV { .. })
        ));
        let tau = compile("sin(x1)", &FunctionTable::new()).unwrap();
        let g = torus_lorentz(tau).unwrap();
        assert_eq!(orthogonal_basis(&g, &[0.5, 0.0], &[0.0, 1.0]).unwrap().len(), 1);
    }
}
