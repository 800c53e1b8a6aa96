use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real interval of admissible times; `hi = None` means unbounded above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: Option<f64>,
    pub hi_closed: bool,
}

impl Interval {
    pub fn open_closed(lo: f64, hi: f64) -> Self {
        Interval { lo, lo_closed: false, hi: Some(hi), hi_closed: true }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, lo_closed: true, hi: Some(hi), hi_closed: true }
    }

    pub fn open_above(lo: f64) -> Self {
        Interval { lo, lo_closed: false, hi: None, hi_closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = match self.hi {
            None => x.is_finite(),
            Some(h) if self.hi_closed => x <= h,
            Some(h) => x < h,
        };
        above && below
    }

    pub fn contains_range(&self, a: f64, b: f64) -> bool {
        a <= b && self.contains(a) && self.contains(b)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        match self.hi {
            Some(h) => {
                let r = if self.hi_closed { ']' } else { ')' };
                write!(f, "{l}{}, {h}{r}", self.lo)
            }
            None => write!(f, "{l}{}, +inf)", self.lo),
        }
    }
}

/// Strictly increasing evaluation times λ₁ < … < λ_d, each above 1. The
/// virtual point λ₀ = 0 is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        for (i, &p) in points.iter().enumerate() {
            if !p.is_finite() || p <= 1.0 {
                return Err(Error::domain(format!("grid point {p} must be finite and > 1")));
            }
            if i > 0 && points[i - 1] >= p {
                return Err(Error::domain(format!(
                    "grid must be strictly increasing ({} followed by {p})",
                    points[i - 1]
                )));
            }
        }
        Ok(TimeGrid { points })
    }

    pub fn single(lambda: f64) -> Result<Self> {
        Self::new(vec![lambda])
    }

    pub fn parse(s: &str) -> Result<Self> {
        let pts = parse_reals(s)?;
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn d(&self) -> usize {
        self.points.len()
    }

    /// λ_j with the convention λ₀ = 0 (j is 1-based).
    pub fn lambda(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.points[j - 1]
        }
    }

    /// Δλ_j = λ_j − λ_{j−1} (j is 1-based).
    pub fn delta(&self, j: usize) -> f64 {
        self.lambda(j) - self.lambda(j - 1)
    }

    pub fn deltas(&self) -> Vec<f64> {
        (1..=self.d()).map(|j| self.delta(j)).collect()
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().copied()
    }
}

pub fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::parse(format!("not a number: '{t}'"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![1.5, 1.2]).is_err());
        assert!(TimeGrid::new(vec![1.5, 1.5]).is_err());
        assert!(TimeGrid::new(vec![0.9]).is_err());
        let g = TimeGrid::new(vec![1.2, 1.8]).unwrap();
        assert_eq!(g.lambda(0), 0.0);
        assert!((g.delta(2) - 0.6).abs() < 1e-15);
        assert_eq!(g.delta(1), 1.2);
        assert_eq!(TimeGrid::new(vec![]).unwrap().d(), 0);
    }

    #[test]
    fn interval_membership() {
        let bin = Interval::open_closed(1.0, 2.0);
        assert!(!bin.contains(1.0));
        assert!(bin.contains(2.0));
        assert!(!bin.contains(2.0001));
        assert!(Interval::open_above(1.0).contains(1e9));
        assert_eq!(bin.to_string(), "(1, 2]");
    }
}
