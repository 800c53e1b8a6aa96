//! Finite joint laws of increments supplied by the user.
//!
//! File format (one record per line, `#` starts a comment):
//!
//! ```text
//! interval: 1.0, 3.0
//! grid: 1.2, 1.8
//! 0.1, 0, 0
//! 0.6, 2, 0
//! 0.3, 0, 2
//! ```
//!
//! Each data row is `p, δ₁, …, δ_d`. The interval is closed.

use serde::{Deserialize, Serialize};

use super::grid::{parse_reals, Interval, TimeGrid};
use crate::error::{Error, Result};

pub const PROB_TOL: f64 = 1e-12;
pub const MEAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub p: f64,
    pub deltas: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub interval: Interval,
    pub grid: TimeGrid,
    pub outcomes: Vec<Outcome>,
}

impl TabularModel {
    pub fn new(interval: Interval, grid: TimeGrid, outcomes: Vec<Outcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::domain("tabular law needs at least one outcome"));
        }
        for &p in grid.points() {
            if !interval.contains(p) {
                return Err(Error::domain(format!("grid point {p} outside {interval}")));
            }
        }
        let d = grid.d();
        let mut total = 0.0;
        for o in &outcomes {
            if o.deltas.len() != d {
                return Err(Error::domain(format!(
                    "outcome has {} increments, grid has {d}",
                    o.deltas.len()
                )));
            }
            if !(o.p >= 0.0) {
                return Err(Error::domain(format!("negative probability {}", o.p)));
            }
            total += o.p;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        for j in 1..=d {
            let mean: f64 = outcomes
                .iter()
                .map(|o| o.p * o.deltas[..j].iter().sum::<u64>() as f64)
                .sum();
            if (mean - grid.lambda(j)).abs() > MEAN_TOL {
                return Err(Error::domain(format!(
                    "E X(λ_{j}) = {mean} but λ_{j} = {}",
                    grid.lambda(j)
                )));
            }
        }
        Ok(TabularModel { interval, grid, outcomes })
    }

    /// A tabular law whose grid is determined by its own means.
    pub fn from_outcomes(outcomes: Vec<Outcome>) -> Result<Self> {
        let d = outcomes.first().map(|o| o.deltas.len()).unwrap_or(0);
        let total: f64 = outcomes.iter().map(|o| o.p).sum();
        let pts: Vec<f64> = (1..=d)
            .map(|j| {
                outcomes.iter().map(|o| o.p * o.deltas[..j].iter().sum::<u64>() as f64).sum::<f64>()
                    / total
            })
            .collect();
        let grid = TimeGrid::new(pts)?;
        let hi = grid.last().unwrap_or(2.0);
        Self::new(Interval::open_closed(1.0, hi), grid, outcomes)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut interval = None;
        let mut grid = None;
        let mut outcomes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = |e: Error| Error::parse(format!("line {}: {e}", lineno + 1));
            if let Some(rest) = line.strip_prefix("interval:") {
                let v = parse_reals(rest).map_err(ctx)?;
                if v.len() != 2 {
                    return Err(Error::parse(format!("line {}: interval needs two bounds", lineno + 1)));
                }
                interval = Some(Interval::closed(v[0], v[1]));
            } else if let Some(rest) = line.strip_prefix("grid:") {
                grid = Some(TimeGrid::parse(rest).map_err(ctx)?);
            } else {
                let v = parse_reals(line).map_err(ctx)?;
                let (p, ds) = v
                    .split_first()
                    .ok_or_else(|| Error::parse(format!("line {}: empty row", lineno + 1)))?;
                let mut deltas = Vec::with_capacity(ds.len());
                for &x in ds {
                    if x < 0.0 || x.fract() != 0.0 {
                        return Err(Error::parse(format!(
                            "line {}: increment {x} is not a non-negative integer",
                            lineno + 1
                        )));
                    }
                    deltas.push(x as u64);
                }
                outcomes.push(Outcome { p: *p, deltas });
            }
        }
        let interval = interval.ok_or_else(|| Error::parse("missing 'interval:' header"))?;
        let grid = grid.ok_or_else(|| Error::parse("missing 'grid:' header"))?;
        Self::new(interval, grid, outcomes)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let hi = self.interval.hi.unwrap_or(f64::INFINITY);
        s.push_str(&format!("interval: {}, {}\n", self.interval.lo, hi));
        let pts: Vec<String> = self.grid.points().iter().map(|p| p.to_string()).collect();
        s.push_str(&format!("grid: {}\n", pts.join(", ")));
        for o in &self.outcomes {
            let ds: Vec<String> = o.deltas.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("{}, {}\n", o.p, ds.join(", ")));
        }
        s
    }

    /// Positions (1-based) in the stored grid of each requested point.
    pub fn locate(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        grid.points()
            .iter()
            .map(|&x| {
                self.grid
                    .points()
                    .iter()
                    .position(|&p| (p - x).abs() <= 1e-12)
                    .map(|k| k + 1)
                    .ok_or_else(|| {
                        Error::domain(format!("tabular law is not defined at λ = {x}"))
                    })
            })
            .collect()
    }

    /// Outcomes expressed as increments over a sub-grid of the stored grid.
    pub fn restricted(&self, grid: &TimeGrid) -> Result<Vec<Outcome>> {
        let pos = self.locate(grid)?;
        Ok(self
            .outcomes
            .iter()
            .map(|o| {
                let mut prev = 0;
                let deltas = pos
                    .iter()
                    .map(|&k| {
                        let s: u64 = o.deltas[prev..k].iter().sum();
                        prev = k;
                        s
                    })
                    .collect();
                Outcome { p: o.p, deltas }
            })
            .collect())
    }

    /// Law of X(λ) as (probability, value) pairs.
    pub fn marginal(&self, lambda: f64) -> Result<Vec<(f64, u64)>> {
        let g = TimeGrid::single(lambda)?;
        Ok(self.restricted(&g)?.into_iter().map(|o| (o.p, o.deltas[0])).collect())
    }
}
