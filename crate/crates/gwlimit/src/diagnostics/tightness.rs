use std::io::Write;

use serde::Serialize;

use super::Report;
use crate::coupling::{CouplingModel, TimeGrid};
use crate::error::{Error, Result};
use crate::forest::{simulate_paths, SimConfig};
use crate::partition::{moment_system, solve_moments, Horizon, Monomial};
use crate::stats::{ols, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessConfig {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    /// Horizon of the exact supremum.
    pub generations: usize,
    /// Monte Carlo replicates for the cross-check; 0 disables it.
    pub replicates: usize,
    /// Generation at which the Monte Carlo cross-check is made.
    pub mc_generation: usize,
    /// Number of shrinking triples (at least 4).
    pub triples: usize,
    pub seed: u64,
}

impl TightnessConfig {
    pub fn new(a: f64, b: f64, kappa: f64) -> Self {
        TightnessConfig { a, b, kappa, generations: 60, replicates: 100_000, mc_generation: 8, triples: 4, seed: 1 }
    }

    /// Triples `(c − w/2, c, c + w/2)` about the midpoint `c`, with widths
    /// halving from `min(0.4, (b − a)/2)`.
    pub fn shrinking_triples(&self) -> Vec<[f64; 3]> {
        let c = (self.a + self.b) / 2.0;
        let w0 = 0.4f64.min((self.b - self.a) / 2.0);
        (0..self.triples)
            .map(|k| {
                let w = w0 / 2f64.powi(k as i32);
                [c - w / 2.0, c, c + w / 2.0]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleResult {
    pub lambdas: [f64; 3],
    pub width: f64,
    /// `E[ΔW_n(λ₂)²ΔW_n(λ₃)²]` for `n = 0..=N`.
    pub trajectory: Vec<f64>,
    pub sup: f64,
    pub limit: f64,
    pub basis_size: usize,
    pub spectral_radius: f64,
    pub self_coefficient: f64,
    /// `λ₁/(λ₂λ₃)²`.
    pub expected_self_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub model: String,
    pub config: TightnessConfig,
    pub results: Vec<TripleResult>,
    /// Least-squares slope of `log sup` against `log(λ₃ − λ₁)`.
    pub slope: f64,
    /// `exp(intercept)`, an estimate of `C_W`.
    pub c_w: f64,
    pub initial_value_zero: bool,
    pub self_coefficient_max_rel_error: f64,
    /// Monte Carlo estimate on the widest triple at `mc_generation`.
    pub mc: Option<Estimate>,
    pub mc_exact: Option<f64>,
    pub mc_z: Option<f64>,
    pub passed: bool,
}

const SELF_COEFFICIENT_TOL: f64 = 1e-12;
const MC_SE: f64 = 4.0;

pub fn tightness_scan(model: &CouplingModel, config: &TightnessConfig) -> Result<TightnessReport> {
    if config.triples < 4 {
        return Err(Error::domain("the exponent fit needs at least 4 widths"));
    }
    if !(config.a < config.b) || !model.interval().contains_range(config.a, config.b) {
        return Err(Error::domain(format!("[{}, {}] is not inside {}", config.a, config.b, model.interval())));
    }
    if config.mc_generation > config.generations {
        return Err(Error::domain("Monte Carlo generation beyond the horizon"));
    }
    let target = Monomial::parse("dW2:2,dW3:2", 3)?;
    let mut results = Vec::new();
    for t in config.shrinking_triples() {
        let grid = TimeGrid::new(t.to_vec())?;
        let sys = moment_system(model, &grid, &target)?;
        let trajectory = sys.trajectory(config.generations);
        let sup = trajectory.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let limit = solve_moments(&sys, Horizon::Limit)?;
        results.push(TripleResult {
            lambdas: t,
            width: t[2] - t[0],
            sup,
            limit: limit.value,
            basis_size: sys.len(),
            spectral_radius: limit.spectral_radius.unwrap_or(f64::NAN),
            self_coefficient: sys.self_coefficient(),
            expected_self_coefficient: t[0] / (t[1] * t[2]).powi(2),
            trajectory,
        });
    }
    let x: Vec<f64> = results.iter().map(|r| r.width.ln()).collect();
    let y: Vec<f64> = results.iter().map(|r| r.sup.ln()).collect();
    let (intercept, slope) = ols(&x, &y);
    let initial_value_zero = results.iter().all(|r| r.trajectory[0] == 0.0);
    let self_err = results
        .iter()
        .map(|r| (r.self_coefficient - r.expected_self_coefficient).abs() / r.expected_self_coefficient)
        .fold(0.0, f64::max);

    let (mut mc, mut mc_exact, mut mc_z) = (None, None, None);
    if config.replicates > 0 {
        let widest = &results[0];
        let grid = TimeGrid::new(widest.lambdas.to_vec())?;
        let n = config.mc_generation;
        let sim = SimConfig::new(n, config.replicates, config.seed).only(vec![n]);
        let ens = simulate_paths(model, &grid, &sim)?;
        let est = ens.expect(n, |w| ((w[1] - w[0]) * (w[2] - w[1])).powi(2))?;
        let exact = widest.trajectory[n];
        mc_z = Some(est.z(exact));
        mc = Some(est);
        mc_exact = Some(exact);
    }
    let passed = slope >= 2.0 * config.kappa
        && initial_value_zero
        && self_err <= SELF_COEFFICIENT_TOL
        && results.iter().all(|r| r.sup.is_finite())
        && mc_z.is_none_or(|z| z <= MC_SE);
    Ok(TightnessReport {
        model: format!("{:?}", model.kind()).to_lowercase(),
        config: config.clone(),
        results,
        slope,
        c_w: intercept.exp(),
        initial_value_zero,
        self_coefficient_max_rel_error: self_err,
        mc,
        mc_exact,
        mc_z,
        passed,
    })
}

impl Report for TightnessReport {
    fn passed(&self) -> bool {
        self.passed
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "lambda1,lambda2,lambda3,width,sup,limit,basis_size,spectral_radius,self_coefficient,expected_self_coefficient")?;
        for r in &self.results {
            let [l1, l2, l3] = r.lambdas;
            writeln!(
                out,
                "{l1},{l2},{l3},{},{},{},{},{},{},{}",
                r.width, r.sup, r.limit, r.basis_size, r.spectral_radius, r.self_coefficient, r.expected_self_coefficient
            )?;
        }
        Ok(())
    }
}
