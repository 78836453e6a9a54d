use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{BoundExpr, CoordNames};
use crate::geom::connection::christoffel_fast;
use crate::geom::metric::{bilinear, MetricField};
use crate::ode::{integrate, FlowSystem, IntegratorOptions, TrajectoryResult};

pub type ScalarFieldFn = Arc<dyn Fn(&[f64], f64) -> Result<f64> + Send + Sync>;
pub type VectorFieldFn = Arc<dyn Fn(&[f64], f64) -> Result<Vec<f64>> + Send + Sync>;
pub type MatrixFieldFn = Arc<dyn Fn(&[f64], f64) -> Result<DMatrix<f64>> + Send + Sync>;

pub const U_METRIC: &str = "u_metric";
pub const POTENTIAL: &str = "potential";
pub const ENERGY: &str = "energy";

/// Step for finite-difference gradients of potentials.
pub(crate) fn gradient_step(p: &[f64]) -> f64 {
    1e-3 * (1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

pub fn scalar_from_expr(e: BoundExpr, names: CoordNames) -> ScalarFieldFn {
    Arc::new(move |p, t| e.eval(&names.vars(p, t)))
}

pub fn vector_from_exprs(es: Vec<BoundExpr>, names: CoordNames) -> VectorFieldFn {
    Arc::new(move |p, t| {
        let vars = names.vars(p, t);
        es.iter().map(|e| e.eval(&vars)).collect()
    })
}

pub fn matrix_from_exprs(rows: Vec<Vec<BoundExpr>>, names: CoordNames) -> Result<MatrixFieldFn> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::BadDimension(n));
    }
    Ok(Arc::new(move |p, t| {
        let vars = names.vars(p, t);
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m[(i, j)] = e.eval(&vars)?;
            }
        }
        Ok(m)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradSource {
    Analytic,
    FiniteDifference,
}

/// How the integrator measures speed: `√g(v,v)` or the chart norm of `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedGauge {
    MetricNorm,
    ChartNorm,
}

/// `Dγ'/dt = E γ' + R − ∇V` on a metric chart.
#[derive(Clone)]
pub struct TrajectoryProblem {
    pub metric: MetricField,
    pub endomorphism: Option<MatrixFieldFn>,
    pub force: Option<VectorFieldFn>,
    pub potential: Option<ScalarFieldFn>,
    /// `∂V/∂t`; treated as zero when absent.
    pub potential_dt: Option<ScalarFieldFn>,
    /// Analytic differential `dV` (covector components).
    pub potential_grad: Option<VectorFieldFn>,
    pub speed_gauge: SpeedGauge,
}

impl fmt::Debug for TrajectoryProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrajectoryProblem")
            .field("metric", &self.metric.label())
            .field("endomorphism", &self.endomorphism.is_some())
            .field("force", &self.force.is_some())
            .field("potential", &self.potential.is_some())
            .field("potential_dt", &self.potential_dt.is_some())
            .field("grad_source", &self.grad_source())
            .finish()
    }
}

impl TrajectoryProblem {
    /// A problem on a Riemannian metric with no forces.
    pub fn new(metric: MetricField) -> Result<Self> {
        if metric.signature() != 0 {
            return Err(Error::SignatureMismatch {
                point: vec![],
                declared: 0,
                found: metric.signature(),
            });
        }
        Ok(Self::geodesic(metric))
    }

    /// Geodesic equation of a metric of any index, speed measured in the chart norm.
    pub fn geodesic(metric: MetricField) -> Self {
        let speed_gauge = if metric.signature() == 0 {
            SpeedGauge::MetricNorm
        } else {
            SpeedGauge::ChartNorm
        };
        TrajectoryProblem {
            metric,
            endomorphism: None,
            force: None,
            potential: None,
            potential_dt: None,
            potential_grad: None,
            speed_gauge,
        }
    }

    pub fn with_endomorphism(mut self, e: MatrixFieldFn) -> Self {
        self.endomorphism = Some(e);
        self
    }

    pub fn with_force(mut self, r: VectorFieldFn) -> Self {
        self.force = Some(r);
        self
    }

    pub fn with_potential(mut self, v: ScalarFieldFn, dv_dt: Option<ScalarFieldFn>) -> Self {
        self.potential = Some(v);
        self.potential_dt = dv_dt;
        self
    }

    pub fn with_potential_gradient(mut self, dv: VectorFieldFn) -> Self {
        self.potential_grad = Some(dv);
        self
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn grad_source(&self) -> GradSource {
        if self.potential_grad.is_some() {
            GradSource::Analytic
        } else {
            GradSource::FiniteDifference
        }
    }

    pub fn potential_at(&self, p: &[f64], t: f64) -> Result<f64> {
        match &self.potential {
            Some(v) => v(p, t),
            None => Ok(0.0),
        }
    }

    pub fn potential_dt_at(&self, p: &[f64], t: f64) -> Result<f64> {
        match &self.potential_dt {
            Some(v) => v(p, t),
            None => Ok(0.0),
        }
    }

    pub fn force_at(&self, p: &[f64], t: f64) -> Result<Vec<f64>> {
        match &self.force {
            Some(r) => r(p, t),
            None => Ok(vec![0.0; self.dim()]),
        }
    }

    pub fn endomorphism_at(&self, p: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        match &self.endomorphism {
            Some(e) => {
                let m = e(p, t)?;
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::BadDimension(m.nrows()));
                }
                Ok(m)
            }
            None => Ok(DMatrix::zeros(n, n)),
        }
    }

    /// Self-adjoint part `S = (E + g⁻¹Eᵀg)/2`.
    pub fn self_adjoint_part(&self, p: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let e = self.endomorphism_at(p, t)?;
        let g = self.metric.raw(p)?;
        let inv = self.metric.inverse_of(&g, p)?;
        Ok((&e + &inv * e.transpose() * &g) * 0.5)
    }

    /// Differential `dV` by the analytic callback or order-4 central differences.
    pub fn potential_differential(&self, p: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = self.dim();
        if let Some(dv) = &self.potential_grad {
            return dv(p, t);
        }
        let Some(v) = &self.potential else {
            return Ok(vec![0.0; n]);
        };
        potential_differential_fd(v, p, t)
    }

    /// Gradient `∇V = g⁻¹ dV`.
    pub fn potential_gradient(&self, p: &[f64], t: f64) -> Result<Vec<f64>> {
        let dv = self.potential_differential(p, t)?;
        let g = self.metric.raw(p)?;
        let inv = self.metric.inverse_of(&g, p)?;
        Ok((inv * DVector::from_vec(dv)).as_slice().to_vec())
    }

    /// Integrates from `(x0, v0)` at `t0`; the ledger gains `u_metric`,
    /// `potential` and `energy = u/2 + V`.
    pub fn solve(
        &self,
        t0: f64,
        x0: &[f64],
        v0: &[f64],
        horizon: f64,
        opts: &IntegratorOptions,
    ) -> Result<TrajectoryResult> {
        let n = self.dim();
        if x0.len() != n || v0.len() != n {
            return Err(Error::InvalidInitialState(format!(
                "expected position and velocity of dimension {n}"
            )));
        }
        let mut s0 = x0.to_vec();
        s0.extend_from_slice(v0);
        let flow = TrajectoryFlow { problem: self };
        let mut r = integrate(&flow, t0, &s0, horizon, opts)?;
        attach_energy_ledger(self, &mut r)?;
        Ok(r)
    }
}

pub(crate) fn potential_differential_fd(v: &ScalarFieldFn, p: &[f64], t: f64) -> Result<Vec<f64>> {
    let h = gradient_step(p);
    let mut q = p.to_vec();
    (0..p.len())
        .map(|k| {
            let mut at = |off: f64| {
                q[k] = p[k] + off;
                let r = v(&q, t);
                q[k] = p[k];
                r
            };
            let (f2, f1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
            Ok((8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h))
        })
        .collect()
}

fn attach_energy_ledger(prob: &TrajectoryProblem, r: &mut TrajectoryResult) -> Result<()> {
    let n = prob.dim();
    let mut u = Vec::with_capacity(r.times.len());
    let mut pot = Vec::with_capacity(r.times.len());
    for (t, s) in r.times.iter().zip(&r.states) {
        let g = prob.metric.raw(&s[..n])?;
        u.push(bilinear(&g, &s[n..], &s[n..]));
        pot.push(prob.potential_at(&s[..n], *t)?);
    }
    let energy = u.iter().zip(&pot).map(|(u, v)| 0.5 * u + v).collect();
    r.push_ledger(U_METRIC, u);
    if prob.potential.is_some() {
        r.push_ledger(POTENTIAL, pot);
        r.push_ledger(ENERGY, energy);
    }
    Ok(())
}

/// `aᵏ = −Γᵏᵢⱼ vⁱ vʲ + (E v)ᵏ + Rᵏ − (∇V)ᵏ`.
pub fn trajectory_rhs(prob: &TrajectoryProblem, t: f64, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = prob.dim();
    prob.metric.domain().check(x)?;
    let gamma = christoffel_fast(&prob.metric, x)?;
    let mut a = vec![0.0; n];
    for (k, ak) in a.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gamma[(k * n + i) * n + j] * v[i] * v[j];
            }
        }
        *ak = -s;
    }
    if prob.endomorphism.is_some() {
        let e = prob.endomorphism_at(x, t)?;
        let ev = e * DVector::from_column_slice(v);
        for k in 0..n {
            a[k] += ev[k];
        }
    }
    if prob.force.is_some() {
        for (ak, rk) in a.iter_mut().zip(prob.force_at(x, t)?) {
            *ak += rk;
        }
    }
    if prob.potential.is_some() || prob.potential_grad.is_some() {
        for (ak, gk) in a.iter_mut().zip(prob.potential_gradient(x, t)?) {
            *ak -= gk;
        }
    }
    Ok(a)
}

/// First-order form on the tangent bundle, state `(x, v)`.
pub struct TrajectoryFlow<'a> {
    pub problem: &'a TrajectoryProblem,
}

impl FlowSystem for TrajectoryFlow<'_> {
    fn state_dim(&self) -> usize {
        2 * self.problem.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.problem.dim();
        let a = trajectory_rhs(self.problem, t, &y[..n], &y[n..])?;
        dy[..n].copy_from_slice(&y[n..]);
        dy[n..].copy_from_slice(&a);
        Ok(())
    }

    fn inside(&self, y: &[f64]) -> bool {
        self.problem.metric.domain().contains(&y[..self.problem.dim()])
    }

    fn speed(&self, _t: f64, y: &[f64]) -> f64 {
        let n = self.problem.dim();
        match self.problem.speed_gauge {
            SpeedGauge::ChartNorm => y[n..].iter().map(|x| x * x).sum::<f64>().sqrt(),
            SpeedGauge::MetricNorm => match self.problem.metric.raw(&y[..n]) {
                Ok(g) => bilinear(&g, &y[n..], &y[n..]).max(0.0).sqrt(),
                Err(_) => f64::INFINITY,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::metric::euclidean;

    fn quadratic_potential() -> TrajectoryProblem {
        TrajectoryProblem::new(euclidean(2).unwrap())
            .unwrap()
            .with_potential(Arc::new(|p: &[f64], _t| Ok(-p[0] * p[0])), None)
    }

    #[test]
    fn free_particle_moves_straight() {
        let prob = TrajectoryProblem::new(euclidean(2).unwrap()).unwrap();
        let a = trajectory_rhs(&prob, 0.0, &[0.3, -1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
        let r = prob
            .solve(0.0, &[0.0, 0.0], &[1.0, 2.0], 2.0, &IntegratorOptions::default())
            .unwrap();
        let s = r.final_state();
        assert!((s[0] - 2.0).abs() < 1e-12 && (s[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_oscillator_is_cosh() {
        let prob = quadratic_potential();
        let a = trajectory_rhs(&prob, 0.0, &[0.7, 0.0], &[0.0, 0.0]).unwrap();
        assert!((a[0] - 1.4).abs() < 1e-10);
        let r = prob
            .solve(0.0, &[1.0, 0.0], &[0.0, 0.0], 1.5, &IntegratorOptions::tolerances(1e-12, 1e-14))
            .unwrap();
        let expected = (2f64.sqrt() * 1.5).cosh();
        assert!((r.final_state()[0] - expected).abs() < 1e-9 * expected);
        let e = r.ledger(ENERGY).unwrap();
        assert!(e.iter().all(|x| (x - e[0]).abs() < 1e-9));
    }

    #[test]
    fn skew_endomorphism_does_no_work() {
        let w = 1.7;
        let prob = TrajectoryProblem::new(euclidean(2).unwrap())
            .unwrap()
            .with_endomorphism(Arc::new(move |_p: &[f64], _t| {
                Ok(DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]))
            }));
        let r = prob
            .solve(0.0, &[0.0, 0.0], &[1.0, 0.5], 10.0, &IntegratorOptions::tolerances(1e-11, 1e-13))
            .unwrap();
        let u = r.ledger(U_METRIC).unwrap();
        assert!(u.iter().all(|x| (x - 1.25).abs() < 1e-8));
        let s = prob.self_adjoint_part(&[0.0, 0.0], 0.0).unwrap();
        assert!(s.amax() < 1e-15);
    }

    #[test]
    fn finite_difference_gradient_matches_analytic() {
        let fd = quadratic_potential();
        let analytic = quadratic_potential().with_potential_gradient(Arc::new(|p: &[f64], _t| Ok(vec![-2.0 * p[0], 0.0])));
        assert_eq!(analytic.grad_source(), GradSource::Analytic);
        for x in [-3.0, -0.2, 0.0, 1.1, 7.5] {
            let a = fd.potential_gradient(&[x, 1.0], 0.0).unwrap();
            let b = analytic.potential_gradient(&[x, 1.0], 0.0).unwrap();
            assert!((a[0] - b[0]).abs() <= 1e-6 * (1.0 + b[0].abs()));
        }
    }

    #[test]
    fn lorentzian_metric_needs_geodesic_constructor() {
        let g = crate::geom::metric::minkowski(2).unwrap();
        assert!(TrajectoryProblem::new(g.clone()).is_err());
        assert_eq!(TrajectoryProblem::geodesic(g).speed_gauge, SpeedGauge::ChartNorm);
    }
}
