use std::io::Write;

use serde::Serialize;

use super::Report;
use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::fixedpoint::{conditioned_moments, extinction_probability};
use crate::forest::PathEnsemble;
use crate::stats::{batch_mean, batch_ratio, Estimate};

const TEST_SE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedMomentCheck {
    pub order: usize,
    pub estimate: Estimate,
    pub expected: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KestenStigumPoint {
    pub lambda: f64,
    pub q: f64,
    pub mean_w: Estimate,
    pub extinct_fraction: Estimate,
    /// `E[W_N | Z_N > 0]`, expected `1/(1 − q)`.
    pub conditioned_mean: Estimate,
    /// Orders 2 and 3 against the moments of the conditioned limit.
    pub conditioned_moments: Vec<ConditionedMomentCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KestenStigumReport {
    pub model: String,
    pub generation: usize,
    pub replicates: usize,
    pub overflowed: usize,
    pub points: Vec<KestenStigumPoint>,
    pub passed: bool,
}

/// Compares the last recorded generation of an ensemble with the limit
/// statistics: `E W = 1`, `P(W = 0) = q` and `E[W | W > 0] = 1/(1 − q)`.
pub fn kesten_stigum_check(ensemble: &PathEnsemble, model: &CouplingModel) -> Result<KestenStigumReport> {
    let n = *ensemble.recorded().last().ok_or_else(|| Error::domain("ensemble records no generation"))?;
    let clean: Vec<usize> = ensemble.clean_replicates().collect();
    let mut points = Vec::new();
    for (j, &lambda) in ensemble.grid.points().iter().enumerate() {
        let q = extinction_probability(model, lambda, 1e-14)?;
        let w: Vec<f64> = clean.iter().map(|&r| ensemble.w(r, n, j)).collect::<Result<_>>()?;
        let alive: Vec<f64> = w.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
        let mean_w = batch_mean(&w);
        let extinct_fraction = ensemble.extinct_fraction(n, j)?;
        let conditioned_mean = batch_ratio(&w, &alive);
        let mu = conditioned_moments(model, lambda, q, 3)?;
        let checks: Vec<ConditionedMomentCheck> = (2..=3)
            .map(|k| {
                let wk: Vec<f64> = w.iter().map(|x| x.powi(k as i32)).collect();
                let estimate = batch_ratio(&wk, &alive);
                ConditionedMomentCheck { order: k, estimate, expected: mu[k], passed: estimate.within(mu[k], TEST_SE) }
            })
            .collect();
        let passed = mean_w.within(1.0, TEST_SE)
            && extinct_fraction.within(q, TEST_SE)
            && conditioned_mean.within(1.0 / (1.0 - q), TEST_SE)
            && checks.iter().all(|c| c.passed);
        points.push(KestenStigumPoint {
            lambda,
            q,
            mean_w,
            extinct_fraction,
            conditioned_mean,
            conditioned_moments: checks,
            passed,
        });
    }
    let passed = points.iter().all(|p| p.passed);
    Ok(KestenStigumReport {
        model: format!("{:?}", model.kind()).to_lowercase(),
        generation: n,
        replicates: ensemble.replicates(),
        overflowed: ensemble.overflow_count(),
        points,
        passed,
    })
}

impl Report for KestenStigumReport {
    fn passed(&self) -> bool {
        self.passed
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "lambda,q,mean_w,mean_w_se,extinct,extinct_se,cond_mean,cond_mean_se,passed")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.lambda,
                p.q,
                p.mean_w.mean,
                p.mean_w.se,
                p.extinct_fraction.mean,
                p.extinct_fraction.se,
                p.conditioned_mean.mean,
                p.conditioned_mean.se,
                p.passed
            )?;
        }
        Ok(())
    }
}
