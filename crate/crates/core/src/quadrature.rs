use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed time interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDomain {
    pub lo: f64,
    pub hi: f64,
}

impl TimeDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param(format!("time domain [{lo}, {hi}] must satisfy lo < hi")));
        }
        Ok(TimeDomain { lo, hi })
    }

    pub fn unit() -> Self {
        TimeDomain { lo: 0.0, hi: 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfDomain(t, self.lo, self.hi))
        }
    }

    /// `g` equally spaced points including both endpoints.
    pub fn uniform_grid(&self, g: usize) -> Vec<f64> {
        match g {
            0 => Vec::new(),
            1 => vec![0.5 * (self.lo + self.hi)],
            _ => {
                let h = self.len() / (g - 1) as f64;
                (0..g)
                    .map(|i| if i + 1 == g { self.hi } else { self.lo + h * i as f64 })
                    .collect()
            }
        }
    }
}

/// Trapezoid weights for a sorted grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let mut w = vec![0.0; g];
    for i in 1..g {
        let half = 0.5 * (grid[i] - grid[i - 1]);
        w[i - 1] += half;
        w[i] += half;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let grid = TimeDomain::new(0.0, 2.0).unwrap().uniform_grid(7);
        let w = trapezoid_weights(&grid);
        let integral: f64 = grid.iter().zip(&w).map(|(t, w)| (3.0 * t + 1.0) * w).sum();
        assert!((integral - 8.0).abs() < 1e-12);
    }

    #[test]
    fn domain_validation() {
        assert!(TimeDomain::new(1.0, 1.0).is_err());
        let d = TimeDomain::unit();
        assert!(d.check(1.0).is_ok());
        assert!(matches!(d.check(1.5), Err(Error::OutOfDomain(..))));
    }
}
