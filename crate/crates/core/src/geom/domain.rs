use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Open interval `(lo, hi)`; a missing end is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval { lo: None, hi: None };

    pub fn above(lo: f64) -> Self {
        Interval {
            lo: Some(lo),
            hi: None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x > lo) && self.hi.is_none_or(|hi| x < hi)
    }
}

/// Coordinate chart: dimension, per-coordinate open bounds and optional periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDomain {
    dim: usize,
    bounds: Vec<Interval>,
    periods: Vec<Option<f64>>,
}

impl ChartDomain {
    pub fn new(bounds: Vec<Interval>, periods: Vec<Option<f64>>) -> Result<Self> {
        let dim = bounds.len();
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::BadDimension(dim));
        }
        if periods.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "{} periods given for dimension {dim}",
                periods.len()
            )));
        }
        for (i, b) in bounds.iter().enumerate() {
            if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
                if !(lo < hi) {
                    return Err(Error::InvalidDomain(format!("coordinate {i}: empty interval")));
                }
            }
            if b.lo.is_some_and(|x| !x.is_finite()) || b.hi.is_some_and(|x| !x.is_finite()) {
                return Err(Error::InvalidDomain(format!(
                    "coordinate {i}: non-finite bound"
                )));
            }
        }
        for (i, p) in periods.iter().enumerate() {
            if let Some(p) = p {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "coordinate {i}: period must be finite and positive"
                    )));
                }
            }
        }
        Ok(ChartDomain {
            dim,
            bounds,
            periods,
        })
    }

    /// All of `R^dim`.
    pub fn unbounded(dim: usize) -> Result<Self> {
        Self::new(vec![Interval::UNBOUNDED; dim], vec![None; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    /// Maps periodic coordinates into `[0, period)`.
    pub fn reduce(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.periods)
            .map(|(&x, per)| match per {
                Some(per) => x.rem_euclid(*per),
                None => x,
            })
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim
            && p.iter().all(|x| x.is_finite())
            && self
                .reduce(p)
                .iter()
                .zip(&self.bounds)
                .all(|(&x, b)| b.contains(x))
    }

    /// Reduced copy of `p`, or `OutOfDomain`.
    pub fn check(&self, p: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(p) {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        Ok(self.reduce(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions_and_periods() {
        assert!(matches!(ChartDomain::unbounded(1), Err(Error::BadDimension(1))));
        assert!(matches!(ChartDomain::unbounded(9), Err(Error::BadDimension(9))));
        assert!(ChartDomain::new(vec![Interval::UNBOUNDED; 2], vec![Some(0.0), None]).is_err());
        assert!(ChartDomain::new(
            vec![
                Interval {
                    lo: Some(1.0),
                    hi: Some(1.0)
                },
                Interval::UNBOUNDED
            ],
            vec![None, None]
        )
        .is_err());
    }

    #[test]
    fn periodic_reduction() {
        let d = ChartDomain::new(vec![Interval::UNBOUNDED; 2], vec![Some(1.0), Some(1.0)]).unwrap();
        let r = d.reduce(&[2.25, -0.25]);
        assert_eq!(r, vec![0.25, 0.75]);
    }

    #[test]
    fn half_plane_membership() {
        let d = ChartDomain::new(vec![Interval::above(0.0), Interval::UNBOUNDED], vec![None, None])
            .unwrap();
        assert!(d.contains(&[1e-9, -5.0]));
        assert!(!d.contains(&[0.0, 0.0]));
        assert!(matches!(d.check(&[-1.0, 0.0]), Err(Error::OutOfDomain { .. })));
    }
}
