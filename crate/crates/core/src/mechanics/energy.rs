use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geom::metric::bilinear;
use crate::mechanics::problem::{TrajectoryProblem, U_METRIC};
use crate::ode::TrajectoryResult;

/// Weights of the derivative at `x0` from values at `nodes` (Fornberg).
pub fn derivative_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    // c[j][k]: weight of node j for derivative order k (k = 0, 1).
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Fourth-order derivative of a sampled series at interior index `i`.
fn derivative_at(times: &[f64], values: &[f64], i: usize) -> f64 {
    let nodes = &times[i - 2..=i + 2];
    derivative_weights(times[i], nodes)
        .iter()
        .zip(&values[i - 2..=i + 2])
        .map(|(w, v)| w * v)
        .sum()
}

/// Maximum over interior samples of
/// `|½u' − g(Sγ',γ') − g(R,γ') + (d/dt V(γ,t) − ∂V/∂t)|`.
pub fn energy_rate_residual(prob: &TrajectoryProblem, traj: &TrajectoryResult) -> Result<f64> {
    let m = traj.times.len();
    if m < 10 {
        return Err(Error::TooFewSamples { got: m, need: 10 });
    }
    let n = prob.dim();
    let u: Vec<f64> = match traj.ledger(U_METRIC) {
        Some(u) => u.to_vec(),
        None => traj
            .states
            .iter()
            .map(|s| prob.metric.inner(&s[..n], &s[n..], &s[n..]))
            .collect::<Result<_>>()?,
    };
    let pot: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| prob.potential_at(&s[..n], *t))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for i in 2..m - 2 {
        let t = traj.times[i];
        let (x, v) = traj.states[i].split_at(n);
        let du = derivative_at(&traj.times, &u, i);
        let dv = derivative_at(&traj.times, &pot, i);
        let g = prob.metric.raw(x)?;
        let s = prob.self_adjoint_part(x, t)?;
        let sv = (s * DVector::from_column_slice(v)).as_slice().to_vec();
        let r = prob.force_at(x, t)?;
        let res = 0.5 * du - bilinear(&g, &sv, v) - bilinear(&g, &r, v) + (dv - prob.potential_dt_at(x, t)?);
        worst = worst.max(res.abs());
    }
    Ok(worst)
}
