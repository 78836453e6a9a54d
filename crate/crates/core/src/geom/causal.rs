use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::metric::{bilinear, MetricField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CausalCharacter {
    Timelike,
    Lightlike,
    Spacelike,
}

/// Classifies `v` at `p`; lightlike iff `|g(v,v)| <= tol * |v|²` in the chart norm.
pub fn causal_character(g: &MetricField, p: &[f64], v: &[f64], tol: f64) -> Result<CausalCharacter> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let m = g.metric_at(p)?;
    let q = bilinear(&m, &unit, &unit);
    Ok(if q.abs() <= tol {
        CausalCharacter::Lightlike
    } else if q < 0.0 {
        CausalCharacter::Timelike
    } else {
        CausalCharacter::Spacelike
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{compile, FunctionTable};
    use crate::geom::metric::{minkowski, torus_lorentz};

    #[test]
    fn minkowski_classification() {
        let g = minkowski(4).unwrap();
        let p = [0.0; 4];
        assert_eq!(
            causal_character(&g, &p, &[1.0, 0.0, 0.0, 0.0], 1e-12).unwrap(),
            CausalCharacter::Timelike
        );
        assert_eq!(
            causal_character(&g, &p, &[1.0, 1.0, 0.0, 0.0], 1e-12).unwrap(),
            CausalCharacter::Lightlike
        );
        assert_eq!(
            causal_character(&g, &p, &[0.0, 0.0, 2.0, 0.0], 1e-12).unwrap(),
            CausalCharacter::Spacelike
        );
        assert_eq!(causal_character(&g, &p, &[0.0; 4], 1e-12), Err(Error::ZeroVector));
    }

    #[test]
    fn torus_line_is_lightlike() {
        let tau = compile("sin(2*pi*x1)", &FunctionTable::new()).unwrap();
        let g = torus_lorentz(tau).unwrap();
        assert_eq!(
            causal_character(&g, &[0.0, 0.4], &[0.0, 1.0], 1e-12).unwrap(),
            CausalCharacter::Lightlike
        );
    }
}
