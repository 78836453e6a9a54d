//! Pointwise geometry on coordinate charts of dimension 2 to 8.

pub mod causal;
pub mod connection;
pub mod domain;
pub mod metric;
pub mod tensor;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
pub use causal::{causal_character, CausalCharacter};
pub use connection::{
    christoffel, christoffel_fast, covariant_curvature_derivative, covariant_curvature_derivative_norm,
    curvature_tensor, lowered_curvature, ricci, ChristoffelSample, NormEstimate,
};
pub use domain::{ChartDomain, Interval};
pub use metric::{ChristoffelFn, MetricField, SmoothnessSource};
pub use tensor::{TensorSample, Variance};

const CLOSED_FORM_CHECK_POINTS: usize = 20;

/// Attaches closed-form Christoffel symbols after cross-checking them against
/// finite differences at 20 random points in the box `[-radius, radius]^n`
/// around `center` (points outside the domain are skipped).
pub fn attach_closed_form_christoffel(
    mut g: MetricField,
    closed: ChristoffelFn,
    center: &[f64],
    radius: f64,
    seed: u64,
) -> Result<MetricField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < CLOSED_FORM_CHECK_POINTS {
        attempts += 1;
        if attempts > 100 * CLOSED_FORM_CHECK_POINTS {
            return Err(Error::EmptyRegion);
        }
        let p: Vec<f64> = center
            .iter()
            .map(|c| c + radius * rng.gen_range(-1.0..1.0))
            .collect();
        if !g.domain().contains(&p) {
            continue;
        }
        let fd = christoffel(&g, &p)?;
        let cf = closed(&g.domain().reduce(&p))?;
        let scale = 1.0 + fd.components.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = 10.0 * fd.estimated_fd_error + 1e-12 * scale;
        let worst = fd
            .components
            .iter()
            .zip(&cf)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !(worst <= tol) {
            return Err(Error::InvalidArgument(format!(
                "closed-form Christoffel symbols disagree with finite differences at {p:?} by {worst:e}"
            )));
        }
        checked += 1;
    }
    g.set_closed_form(Arc::clone(&closed));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{compile, CoordNames, FunctionTable};

    fn polar() -> MetricField {
        let t = FunctionTable::new();
        let domain = ChartDomain::new(vec![Interval::above(0.0), Interval::UNBOUNDED], vec![None, None]).unwrap();
        metric::from_components(
            "polar",
            domain,
            0,
            CoordNames::Generic,
            vec![
                vec![compile("1", &t).unwrap(), compile("0", &t).unwrap()],
                vec![compile("0", &t).unwrap(), compile("x1^2", &t).unwrap()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn closed_form_accepted_when_correct() {
        // Γ^r_θθ = −r, Γ^θ_rθ = Γ^θ_θr = 1/r.
        let closed: ChristoffelFn = Arc::new(|p: &[f64]| {
            let r = p[0];
            Ok(vec![0.0, 0.0, 0.0, -r, 0.0, 1.0 / r, 1.0 / r, 0.0])
        });
        let g = attach_closed_form_christoffel(polar(), closed, &[2.0, 0.0], 1.0, 7).unwrap();
        let c = christoffel_fast(&g, &[2.0, 0.5]).unwrap();
        assert_eq!(c[3], -2.0);
    }

    #[test]
    fn closed_form_rejected_when_wrong() {
        let closed: ChristoffelFn = Arc::new(|p: &[f64]| {
            let r = p[0];
            Ok(vec![0.0, 0.0, 0.0, r, 0.0, 1.0 / r, 1.0 / r, 0.0])
        });
        assert!(attach_closed_form_christoffel(polar(), closed, &[2.0, 0.0], 1.0, 7).is_err());
    }
}
