//! Dormand–Prince 5(4) tableau and a single explicit step.

use crate::error::Result;
use crate::ode::FlowSystem;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) enum StepOutcome {
    /// Candidate state, its derivative (FSAL) and the error vector.
    Done {
        y_new: Vec<f64>,
        f_new: Vec<f64>,
        err: Vec<f64>,
    },
    /// A stage state left the domain.
    LeftDomain,
    /// A stage produced non-finite values.
    NonFinite,
}

/// Wraps a flow with an appended arc-length component `s' = speed`.
pub(crate) struct Augmented<'a, S: FlowSystem + ?Sized> {
    pub sys: &'a S,
}

impl<S: FlowSystem + ?Sized> Augmented<'_, S> {
    pub fn inside(&self, y: &[f64]) -> bool {
        let n = self.sys.state_dim();
        y.iter().all(|x| x.is_finite()) && self.sys.inside(&y[..n])
    }

    pub fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.sys.state_dim();
        self.sys.rhs(t, &y[..n], &mut dy[..n])?;
        dy[n] = self.sys.speed(t, &y[..n]);
        Ok(())
    }
}

pub(crate) fn step<S: FlowSystem + ?Sized>(
    sys: &Augmented<'_, S>,
    t: f64,
    y: &[f64],
    f0: &[f64],
    h: f64,
) -> Result<StepOutcome> {
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f0.to_vec());
    let mut ys = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj[i];
            }
            ys[i] = y[i] + h * acc;
        }
        if ys.iter().any(|x| !x.is_finite()) {
            return Ok(StepOutcome::NonFinite);
        }
        if !sys.inside(&ys) {
            return Ok(StepOutcome::LeftDomain);
        }
        let mut ks = vec![0.0; n];
        match sys.eval(t + C[s] * h, &ys, &mut ks) {
            Ok(()) => {}
            Err(crate::Error::OutOfDomain { .. }) => return Ok(StepOutcome::LeftDomain),
            Err(e) => return Err(e),
        }
        if ks.iter().any(|x| !x.is_finite()) {
            return Ok(StepOutcome::NonFinite);
        }
        k.push(ks);
    }
    // The last row of A holds the fifth-order weights, so the seventh stage
    // state is the new solution (FSAL).
    let y_new = ys;
    let err: Vec<f64> = (0..n)
        .map(|i| h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>())
        .collect();
    let f_new = k.pop().unwrap();
    Ok(StepOutcome::Done { y_new, f_new, err })
}
