use crate::error::{Error, Result};
use crate::geom::metric::MetricField;
use crate::ode::TrajectoryResult;

/// Max over samples of `|g(γ', K) − g(γ', K)(0)|` along a trajectory with state `(x, x')`.
pub fn killing_conservation<K>(g: &MetricField, k: K, traj: &TrajectoryResult) -> Result<f64>
where
    K: Fn(&[f64]) -> Vec<f64>,
{
    if traj.states.len() < 2 {
        return Err(Error::TooFewSamples {
            got: traj.states.len(),
            need: 2,
        });
    }
    let n = g.dim();
    let value = |s: &[f64]| g.inner(&s[..n], &s[n..2 * n], &k(&s[..n]));
    let first = value(&traj.states[0])?;
    let mut drift = 0.0f64;
    for s in &traj.states[1..] {
        drift = drift.max((value(s)? - first).abs());
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{compile, FunctionTable};
    use crate::geom::metric::{minkowski, torus_lorentz};
    use crate::mechanics::TrajectoryProblem;
    use crate::ode::IntegratorOptions;
    use crate::waves::ppwave::{build_ppwave, PpWaveSpec};

    #[test]
    fn minkowski_rotation() {
        let g = minkowski(3).unwrap();
        let prob = TrajectoryProblem::geodesic(g.clone());
        let opts = IntegratorOptions::default().with_output_step(0.1);
        let r = prob.solve(0.0, &[0.0, 1.0, -0.5], &[1.5, 0.3, 0.8], 10.0, &opts).unwrap();
        let drift = killing_conservation(&g, |p| vec![0.0, -p[2], p[1]], &r).unwrap();
        assert!(drift < 1e-7, "{drift}");
    }

    #[test]
    fn ppwave_null_direction() {
        let spec = PpWaveSpec::from_expression(4, "sin(u)*x1*x2 + 0.1*x1^2", &FunctionTable::new()).unwrap();
        let g = build_ppwave(&spec).unwrap();
        let prob = TrajectoryProblem::geodesic(g.clone());
        let opts = IntegratorOptions::default().with_output_step(0.1);
        let r = prob.solve(0.0, &[0.0, 0.0, 0.5, 0.2], &[1.0, 0.3, 0.1, -0.2], 5.0, &opts).unwrap();
        let drift = killing_conservation(&g, |_| vec![0.0, 1.0, 0.0, 0.0], &r).unwrap();
        assert!(drift < 1e-8, "{drift}");
    }

    #[test]
    fn torus_translation_until_escape() {
        let tau = compile("sin(2*3.141592653589793*x1)", &FunctionTable::new()).unwrap();
        let g = torus_lorentz(tau).unwrap();
        let prob = TrajectoryProblem::geodesic(g.clone());
        let r = prob
            .solve(0.0, &[0.0, 0.0], &[0.0, 1.0], 2.0, &IntegratorOptions::default())
            .unwrap();
        assert!(r.termination.is_blow_up(), "{:?}", r.termination);
        let drift = killing_conservation(&g, |_| vec![0.0, 1.0], &r).unwrap();
        assert!(drift < 1e-8, "{drift}");
    }
}
