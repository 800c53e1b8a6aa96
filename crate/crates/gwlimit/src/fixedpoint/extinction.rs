use std::io::Write;

use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 1_000_000;

/// Parameters closer than this to the critical value 1 are rejected.
pub const NEAR_CRITICAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionSolution {
    pub lambda: f64,
    pub q: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Smallest root of `q = f_λ(q)` in `[0, 1]`.
///
/// Iterates `q ← f_λ(q)` from 0 until successive iterates differ by less
/// than `tol`, then polishes with Newton steps. Both sequences increase
/// monotonically to the smallest root because `f_λ` is convex.
pub fn solve_extinction(model: &CouplingModel, lambda: f64, tol: f64) -> Result<ExtinctionSolution> {
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    if !(lambda > 1.0 + NEAR_CRITICAL) {
        return Err(Error::domain(format!(
            "λ = {lambda} is not supercritical (must exceed 1 + {NEAR_CRITICAL})"
        )));
    }
    let f = |s: f64| model.marginal_pgf(lambda, s);
    let mut q = 0.0;
    let mut iterations = 0;
    loop {
        let next = f(q)?.0;
        iterations += 1;
        let step = (next - q).abs();
        q = next;
        if step < tol {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::Accuracy(format!("extinction iteration did not settle in {MAX_ITERATIONS} steps")));
        }
    }
    for _ in 0..50 {
        let (v, dv) = f(q)?;
        let h = v - q;
        let dh = dv - 1.0;
        if h <= 0.0 || dh >= 0.0 {
            break;
        }
        let next = (q - h / dh).min(1.0);
        if next <= q {
            break;
        }
        q = next;
    }
    let residual = (q - f(q)?.0).abs();
    Ok(ExtinctionSolution { lambda, q, residual, iterations })
}

pub fn extinction_probability(model: &CouplingModel, lambda: f64, tol: f64) -> Result<f64> {
    solve_extinction(model, lambda, tol).map(|s| s.q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionPoint {
    pub lambda: f64,
    pub q: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionCurve {
    pub tolerance: f64,
    pub points: Vec<ExtinctionPoint>,
}

impl ExtinctionCurve {
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].q <= w[0].q + self.tolerance)
    }

    pub fn max_residual(&self) -> f64 {
        self.points.iter().map(|p| p.residual).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "lambda,q,residual")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.lambda, p.q, p.residual)?;
        }
        Ok(())
    }
}

/// Extinction probabilities on a sorted grid of parameters.
pub fn extinction_curve(model: &CouplingModel, lambdas: &[f64], tol: f64) -> Result<ExtinctionCurve> {
    let mut ls = lambdas.to_vec();
    ls.sort_by(f64::total_cmp);
    let points = ls
        .into_iter()
        .map(|l| solve_extinction(model, l, tol).map(|s| ExtinctionPoint { lambda: s.lambda, q: s.q, residual: s.residual }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtinctionCurve { tolerance: tol, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoted_values() {
        let q = extinction_probability(&CouplingModel::Binary, 1.5, 1e-14).unwrap();
        assert!((q - 1.0 / 3.0).abs() < 1e-12);
        let q = extinction_probability(&CouplingModel::Geometric, 2.0, 1e-14).unwrap();
        assert!((q - 0.5).abs() < 1e-12);
        let l = 0.2f64.ln() / (0.2 - 1.0);
        let q = extinction_probability(&CouplingModel::Poisson, l, 1e-14).unwrap();
        assert!((q - 0.2).abs() < 1e-10);
        assert_eq!(extinction_probability(&CouplingModel::Binary, 2.0, 1e-14).unwrap(), 0.0);
    }

    #[test]
    fn rejects_critical_and_subcritical() {
        for l in [0.5, 1.0, 1.0005] {
            assert!(matches!(extinction_probability(&CouplingModel::Poisson, l, 1e-12), Err(Error::Domain(_))));
        }
        assert!(extinction_probability(&CouplingModel::Binary, 2.5, 1e-12).is_err());
    }

    #[test]
    fn curve_is_monotone_with_small_residuals() {
        let ls: Vec<f64> = (0..30).map(|i| 1.05 + 0.1 * i as f64).collect();
        let c = extinction_curve(&CouplingModel::Geometric, &ls, 1e-13).unwrap();
        assert!(c.is_monotone());
        assert!(c.max_residual() < 1e-12);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 31);
    }
}
