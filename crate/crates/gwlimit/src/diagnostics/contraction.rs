use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::Report;
use crate::coupling::{CouplingModel, GridSampler, TimeGrid};
use crate::error::{Error, Result};
use crate::forest::{replicate_rng, simulate_paths, SimConfig};
use crate::partition::{moment_system, solve_moments, Horizon, Monomial};
use crate::stats::{batch_mean, batch_ratio, Estimate, Moments, BATCHES};

const TEST_SE: f64 = 4.0;
const MIN_SAMPLE: usize = 10_000;

/// Stream offset separating the map draws from the ensemble draws.
const MAP_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionConfig {
    pub sample_size: usize,
    /// Generation of the ensemble whose law is `μ`.
    pub generations: usize,
    pub seed: u64,
    pub cap: u64,
}

impl ContractionConfig {
    pub fn new(sample_size: usize, seed: u64) -> Self {
        ContractionConfig { sample_size, generations: 12, seed, cap: crate::forest::DEFAULT_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub model: String,
    pub lambdas: Vec<f64>,
    pub config: ContractionConfig,
    /// Size of the sample of `μ` after dropping overflowed replicates.
    pub mu_size: usize,
    /// `ν = δ_(1,…,1)`.
    pub nu: String,
    /// `d_W(μ, ν)²`, exact for a point mass `ν`.
    pub before: Estimate,
    /// Squared distance of the paired construction after one map step.
    pub after_paired: Estimate,
    pub ratio_paired: Estimate,
    /// Order-statistics estimate of `d_W(Ψμ, Ψν)²/d_W(μ, ν)²` (d = 1).
    pub ratio_sorted: Option<Estimate>,
    /// `1/λ₁`.
    pub bound: f64,
    pub passed: bool,
}

/// One draw of the map: offspring increments, a copy from `pool` per child,
/// with the copies attached from the child's birth index on. Returns the
/// image of the pool law and, paired with it, the image of the point mass
/// at `(1, …, 1)` built from the same offspring draw.
fn map_draw<R: Rng + ?Sized>(
    sampler: &GridSampler,
    lambdas: &[f64],
    pool: &[Vec<f64>],
    rng: &mut R,
    deltas: &mut [u64],
) -> (Vec<f64>, Vec<f64>) {
    let d = lambdas.len();
    sampler.sample_increments(rng, deltas);
    let mut image = vec![0.0; d];
    let mut counts = vec![0.0; d];
    for r in 0..d {
        for _ in 0..deltas[r] {
            let u = &pool[rng.random_range(0..pool.len())];
            for k in r..d {
                image[k] += u[k];
                counts[k] += 1.0;
            }
        }
    }
    for k in 0..d {
        image[k] /= lambdas[k];
        counts[k] /= lambdas[k];
    }
    (image, counts)
}

fn sorted_w2(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Applies the smoothing map once to `μ` (the law of `W_N` from an ensemble)
/// and to `ν = δ_(1,…,1)`, and compares squared transport distances before
/// and after.
pub fn wasserstein_contraction_test(model: &CouplingModel, grid: &TimeGrid, config: &ContractionConfig) -> Result<ContractionReport> {
    let d = grid.d();
    if d == 0 || d > 3 {
        return Err(Error::capability("the contraction test supports 1 ≤ d ≤ 3"));
    }
    if config.sample_size < MIN_SAMPLE {
        return Err(Error::domain(format!("sample size must be at least {MIN_SAMPLE}")));
    }
    let n = config.generations;
    let sim = SimConfig::new(n, config.sample_size, config.seed).cap(config.cap).last_only();
    let ens = simulate_paths(model, grid, &sim)?;
    let pool: Vec<Vec<f64>> = ens.clean_replicates().map(|r| ens.w_row(r, n)).collect::<Result<_>>()?;
    let lambdas = grid.points().to_vec();
    let sampler = model.sampler(grid)?;
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..pool.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(config.seed, MAP_STREAM + i as u64);
            let mut deltas = vec![0; d];
            map_draw(&sampler, &lambdas, &pool, &mut rng, &mut deltas)
        })
        .collect();
    let before_v: Vec<f64> = pool.iter().map(|u| u.iter().map(|x| (x - 1.0).powi(2)).sum()).collect();
    let after_v: Vec<f64> = draws
        .iter()
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum())
        .collect();
    let before = batch_mean(&before_v);
    let after_paired = batch_mean(&after_v);
    let mut ratio_paired = batch_ratio(&after_v, &before_v);
    if before.mean == 0.0 {
        ratio_paired = Estimate { mean: 0.0, se: 0.0, n: ratio_paired.n };
    }
    let ratio_sorted = (d == 1).then(|| {
        let m = pool.len();
        let ratio_of = |lo: usize, hi: usize| {
            let mut a: Vec<f64> = draws[lo..hi].iter().map(|(x, _)| x[0]).collect();
            let mut b: Vec<f64> = draws[lo..hi].iter().map(|(_, y)| y[0]).collect();
            let bef = before_v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            if bef == 0.0 {
                0.0
            } else {
                sorted_w2(&mut a, &mut b) / bef
            }
        };
        let mean = ratio_of(0, m);
        let mut bm = Moments::default();
        for k in 0..BATCHES {
            bm.push(ratio_of(k * m / BATCHES, (k + 1) * m / BATCHES));
        }
        Estimate { mean, se: (bm.variance() / BATCHES as f64).sqrt(), n: m as u64 }
    });
    let bound = 1.0 / lambdas[0];
    let primary = ratio_sorted.unwrap_or(ratio_paired);
    let passed = primary.mean <= bound + TEST_SE * primary.se;
    Ok(ContractionReport {
        model: format!("{:?}", model.kind()).to_lowercase(),
        lambdas,
        config: config.clone(),
        mu_size: pool.len(),
        nu: "point mass at (1, ..., 1)".into(),
        before,
        after_paired,
        ratio_paired,
        ratio_sorted,
        bound,
        passed,
    })
}

impl Report for ContractionReport {
    fn passed(&self) -> bool {
        self.passed
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "quantity,mean,se")?;
        writeln!(out, "before,{},{}", self.before.mean, self.before.se)?;
        writeln!(out, "after_paired,{},{}", self.after_paired.mean, self.after_paired.se)?;
        writeln!(out, "ratio_paired,{},{}", self.ratio_paired.mean, self.ratio_paired.se)?;
        if let Some(r) = self.ratio_sorted {
            writeln!(out, "ratio_sorted,{},{}", r.mean, r.se)?;
        }
        writeln!(out, "bound,{},0", self.bound)?;
        Ok(())
    }
}

/// Repeated application of the map to a pool started at `δ_(1,…,1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapIteration {
    pub lambdas: Vec<f64>,
    pub pool_size: usize,
    pub steps: usize,
    /// `E[U_k²]` of the final pool, per coordinate.
    pub second_moments: Vec<Estimate>,
    /// `E[W_n(λ_k)²]` at `n = steps`, from the moment engine.
    pub exact_at_steps: Vec<f64>,
    /// `E[W(λ_k)²]` in the limit.
    pub limit: Vec<f64>,
    pub passed: bool,
}

pub fn iterate_smoothing_map(model: &CouplingModel, grid: &TimeGrid, pool_size: usize, steps: usize, seed: u64) -> Result<MapIteration> {
    let d = grid.d();
    if pool_size < 2 {
        return Err(Error::domain("pool needs at least two members"));
    }
    let lambdas = grid.points().to_vec();
    let sampler = model.sampler(grid)?;
    let mut pool = vec![vec![1.0; d]; pool_size];
    for s in 0..steps {
        let base = MAP_STREAM + ((s as u64 + 1) << 32);
        pool = (0..pool_size)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(seed, base + i as u64);
                let mut deltas = vec![0; d];
                map_draw(&sampler, &lambdas, &pool, &mut rng, &mut deltas).0
            })
            .collect();
    }
    let mut second_moments = Vec::new();
    let mut exact_at_steps = Vec::new();
    let mut limit = Vec::new();
    for k in 0..d {
        let v: Vec<f64> = pool.iter().map(|u| u[k] * u[k]).collect();
        second_moments.push(batch_mean(&v));
        let target = Monomial::parse(&format!("W{}:2", k + 1), d)?;
        let sys = moment_system(model, grid, &target)?;
        exact_at_steps.push(solve_moments(&sys, Horizon::Generation(steps))?.value);
        limit.push(solve_moments(&sys, Horizon::Limit)?.value);
    }
    let passed = second_moments.iter().zip(&limit).all(|(e, l)| e.within(*l, TEST_SE));
    Ok(MapIteration { lambdas, pool_size, steps, second_moments, exact_at_steps, limit, passed })
}
