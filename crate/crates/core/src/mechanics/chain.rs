//! The a-priori arc-length bound `l(t) < √(A/B) sinh(√B t)`.
//!
//! Hypothesis constants: `‖S‖ ≤ c_s`, `‖R‖ ≤ r0 + r1 ρ`, and
//! `−V, |∂V/∂t| ≤ q0 + q2 ρ²`, where `ρ` is the chart distance to the base
//! point of the fits. Along a trajectory starting at chart distance `d0` from
//! that base, `ρ² ≤ ρc + ρk l²` with `(ρc, ρk) = (0, κ)` if `d0 = 0` and
//! `(2d0², 2κ)` otherwise, `κ` bounding chart norm² by `g`-norm².
//!
//! Chain:
//! ```text
//! d/dt(u + 2V) ≤ (2c_s + 1) u + ‖R‖² + 2|∂V/∂t|
//!              ≤ A0 + A1 u + A2 l²
//! A0 = 2r0² + 2q0 + (2r1² + 2q2) ρc,  A1 = 2c_s + 1,  A2 = (2r1² + 2q2) ρk
//! u ≤ C0' + C1' l² + C2' ∫u
//! C0' = max(u0 + 2V(x0, 0) + A0 b + 2q0 + 2q2 ρc, ε),  C1' = A2 b + 2q2 ρk,  C2' = A1
//! A = C0' (1 + C2' b e^{C2' b}),  B = C1' (1 + C2' b e^{C2' b})
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor substituted for vanishing constants.
pub const CHAIN_FLOOR: f64 = 1e-12;

/// Bounds from the hypotheses and the initial data of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainInputs {
    pub s_bound: f64,
    pub r0: f64,
    pub r1: f64,
    pub q0: f64,
    pub q2: f64,
    pub b: f64,
    /// `u(0) = g(γ'(0), γ'(0))`.
    pub u0: f64,
    /// `V(γ(0), 0)`.
    pub v_initial: f64,
    pub d0: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: f64,
    pub v_initial: f64,
    pub d0: f64,
    pub kappa: f64,
}

impl InitialData {
    /// Initial data at the base point in a chart where `κ = 1`.
    pub fn at_base(u0: f64, v_initial: f64) -> Self {
        InitialData {
            u0,
            v_initial,
            d0: 0.0,
            kappa: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundChain {
    /// Inputs after promotion of zeros to [`CHAIN_FLOOR`].
    pub inputs: ChainInputs,
    pub rho_c: f64,
    pub rho_k: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub c0_prime: f64,
    pub c1_prime: f64,
    pub c2_prime: f64,
    pub factor: f64,
    pub a: f64,
    pub b_coef: f64,
}

fn promote(name: &str, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::NonPositiveInput {
            name: name.to_string(),
            value: x,
        });
    }
    Ok(x.max(CHAIN_FLOOR))
}

impl BoundChain {
    pub fn new(inputs: ChainInputs) -> Result<Self> {
        let i = ChainInputs {
            s_bound: promote("S bound", inputs.s_bound)?,
            r0: promote("R constant", inputs.r0)?,
            r1: promote("R slope", inputs.r1)?,
            q0: promote("V constant", inputs.q0)?,
            q2: promote("V quadratic coefficient", inputs.q2)?,
            b: promote("b", inputs.b)?,
            ..inputs
        };
        if !(i.u0 >= 0.0) || !i.v_initial.is_finite() || !(i.d0 >= 0.0) || !(i.kappa > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid initial data for the bound chain: {inputs:?}")));
        }
        let (rho_c, rho_k) = if i.d0 == 0.0 {
            (0.0, i.kappa)
        } else {
            (2.0 * i.d0 * i.d0, 2.0 * i.kappa)
        };
        let growth = 2.0 * i.r1 * i.r1 + 2.0 * i.q2;
        let a0 = 2.0 * i.r0 * i.r0 + 2.0 * i.q0 + growth * rho_c;
        let a1 = 2.0 * i.s_bound + 1.0;
        let a2 = growth * rho_k;
        let c0_prime = (i.u0 + 2.0 * i.v_initial + a0 * i.b + 2.0 * i.q0 + 2.0 * i.q2 * rho_c).max(CHAIN_FLOOR);
        let c1_prime = a2 * i.b + 2.0 * i.q2 * rho_k;
        let c2_prime = a1;
        let factor = 1.0 + c2_prime * i.b * (c2_prime * i.b).exp();
        let chain = BoundChain {
            inputs: i,
            rho_c,
            rho_k,
            a0,
            a1,
            a2,
            c0_prime,
            c1_prime,
            c2_prime,
            factor,
            a: c0_prime * factor,
            b_coef: c1_prime * factor,
        };
        if [chain.a, chain.b_coef, chain.factor].iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bound chain overflows for b = {}",
                i.b
            )));
        }
        Ok(chain)
    }

    /// `l_max(t) = √(A/B) sinh(√B t)`.
    pub fn l_max(&self, t: f64) -> f64 {
        (self.a / self.b_coef).sqrt() * (self.b_coef.sqrt() * t).sinh()
    }

    /// Checks `l(t) < l_max(t)` at every sample with `0 < t ≤ b`, times measured from the start.
    pub fn check_arc_length(&self, times: &[f64], arc: &[f64]) -> ArcLengthCheck {
        let t0 = times.first().copied().unwrap_or(0.0);
        let mut first_violation = None;
        let mut min_gap = f64::INFINITY;
        let mut checked = 0;
        for (t, l) in times.iter().zip(arc) {
            let s = t - t0;
            if s <= 0.0 || s > self.inputs.b {
                continue;
            }
            checked += 1;
            let gap = self.l_max(s) - l;
            min_gap = min_gap.min(gap);
            if first_violation.is_none() && !(gap > 0.0) {
                first_violation = Some(*t);
            }
        }
        ArcLengthCheck {
            holds: first_violation.is_none() && checked > 0,
            first_violation,
            min_gap,
            checked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcLengthCheck {
    pub holds: bool,
    pub first_violation: Option<f64>,
    pub min_gap: f64,
    pub checked: usize,
}

/// Chain with one constant per hypothesis: `‖S‖ ≤ C0`, `‖R‖ ≤ C0 + C1 ρ`,
/// `−V, |∂V/∂t| ≤ C0 + C2 ρ²`.
pub fn bound_chain(c0: f64, c1: f64, c2: f64, b: f64, initial: &InitialData) -> Result<BoundChain> {
    BoundChain::new(ChainInputs {
        s_bound: c0,
        r0: c0,
        r1: c1,
        q0: c0,
        q2: c2,
        b,
        u0: initial.u0,
        v_initial: initial.v_initial,
        d0: initial.d0,
        kappa: initial.kappa,
    })
}
