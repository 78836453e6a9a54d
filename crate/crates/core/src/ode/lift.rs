//! Autonomous lift of a time-dependent field: `(x, t) ↦ (X(t, x), 1)`.

use crate::error::Result;
use crate::ode::FlowSystem;

/// The lift of `X` to the state space with an appended time coordinate.
/// Its speed gauge is the direct sum `F(X) + 1`.
#[derive(Debug, Clone)]
pub struct LiftedSystem<S> {
    inner: S,
}

pub fn lift_time_dependent<S: FlowSystem>(field: S) -> LiftedSystem<S> {
    LiftedSystem { inner: field }
}

impl<S> LiftedSystem<S> {
    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: FlowSystem> FlowSystem for LiftedSystem<S> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim() + 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.inner.state_dim();
        self.inner.rhs(y[n], &y[..n], &mut dy[..n])?;
        dy[n] = 1.0;
        Ok(())
    }

    fn inside(&self, y: &[f64]) -> bool {
        self.inner.inside(&y[..self.inner.state_dim()])
    }

    fn speed(&self, _t: f64, y: &[f64]) -> f64 {
        let n = self.inner.state_dim();
        self.inner.speed(y[n], &y[..n]) + 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, FnFlow, IntegratorOptions};

    #[test]
    fn linear_in_time_field() {
        let lifted = lift_time_dependent(FnFlow::new(1, |t, _y, dy| {
            dy[0] = t;
            Ok(())
        }));
        let r = integrate(&lifted, 0.0, &[0.0, 0.0], 2.0, &IntegratorOptions::default()).unwrap();
        let s = r.final_state();
        assert!((s[0] - 2.0).abs() < 1e-10);
        assert!((s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_and_arc_length() {
        let field = || {
            FnFlow::new(2, |_t, y, dy| {
                dy[0] = -y[1];
                dy[1] = y[0];
                Ok(())
            })
        };
        let opts = IntegratorOptions::tolerances(1e-12, 1e-14).with_output_step(0.25);
        let plain = integrate(&field(), 0.0, &[1.0, 0.0], 3.0, &opts).unwrap();
        let lifted = integrate(&lift_time_dependent(field()), 0.0, &[1.0, 0.0, 0.0], 3.0, &opts).unwrap();
        assert_eq!(plain.times.len(), lifted.times.len());
        for (a, b) in plain.states.iter().zip(&lifted.states) {
            assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
        }
        let la = plain.arc_length().last().unwrap();
        let lb = lifted.arc_length().last().unwrap();
        assert!((lb - la - 3.0).abs() < 1e-9);
    }
}
