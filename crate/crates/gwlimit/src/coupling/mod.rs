//! Offspring processes `X(λ)`: joint increment laws on a time grid,
//! generating functions and factorial moments.

mod grid;
mod sampler;
mod tabular;

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grid::{parse_reals, Interval, TimeGrid};
pub use sampler::{GridSampler, DEFAULT_BATCH_THRESHOLD};
pub use tabular::{Outcome, TabularModel, MEAN_TOL, PROB_TOL};

use crate::error::{Error, Result};
use crate::scalar::{factorial, falling_factorial, Scalar};
use crate::stats::Estimate;

/// Highest factorial-moment order served by the closed forms of the built-in
/// couplings.
pub const MAX_BUILTIN_ORDER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Binary,
    Geometric,
    Poisson,
    Tabular,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Kind::Binary => "binary",
            Kind::Geometric => "geometric",
            Kind::Poisson => "poisson",
            Kind::Tabular => "tabular",
        };
        f.write_str(s)
    }
}

/// The law of an offspring process `(X(λ))_{λ∈I}`.
///
/// * `Binary`: `X(λ) = 2·1{U ≤ λ/2}` on `(1, 2]`.
/// * `Geometric`: geometric marginals with independent increments, a
///   geometric first jump and Bernoulli-gated `1 + Geo` later jumps.
/// * `Poisson`: a rate-one Poisson process.
/// * `Tabular`: an explicit finite law of increments on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CouplingModel {
    Binary,
    Geometric,
    Poisson,
    Tabular(TabularModel),
}

/// One joint draw of `(ΔX(λ₁), …, ΔX(λ_d))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementVector {
    pub deltas: Vec<u64>,
}

impl IncrementVector {
    pub fn prefix_sums(&self) -> Vec<u64> {
        self.deltas
            .iter()
            .scan(0u64, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }
}

impl CouplingModel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(CouplingModel::Binary),
            "geometric" | "geo" => Ok(CouplingModel::Geometric),
            "poisson" | "poi" => Ok(CouplingModel::Poisson),
            other => Err(Error::domain(format!("unknown model '{other}'"))),
        }
    }

    pub fn builtins() -> [CouplingModel; 3] {
        [CouplingModel::Binary, CouplingModel::Geometric, CouplingModel::Poisson]
    }

    pub fn kind(&self) -> Kind {
        match self {
            CouplingModel::Binary => Kind::Binary,
            CouplingModel::Geometric => Kind::Geometric,
            CouplingModel::Poisson => Kind::Poisson,
            CouplingModel::Tabular(_) => Kind::Tabular,
        }
    }

    pub fn interval(&self) -> Interval {
        match self {
            CouplingModel::Binary => Interval::open_closed(1.0, 2.0),
            CouplingModel::Geometric | CouplingModel::Poisson => Interval::open_above(1.0),
            CouplingModel::Tabular(t) => t.interval,
        }
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        let iv = self.interval();
        for &p in grid.points() {
            if !iv.contains(p) {
                return Err(Error::domain(format!("λ = {p} outside the {} interval {iv}", self.kind())));
            }
        }
        if let CouplingModel::Tabular(t) = self {
            t.locate(grid)?;
        }
        Ok(())
    }

    pub fn sampler(&self, grid: &TimeGrid) -> Result<GridSampler> {
        GridSampler::new(self, grid)
    }

    /// One joint draw of the increments on `grid`.
    pub fn sample_increments<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R) -> Result<IncrementVector> {
        let s = self.sampler(grid)?;
        let mut deltas = vec![0; grid.d()];
        s.sample_increments(rng, &mut deltas);
        Ok(IncrementVector { deltas })
    }

    /// `E[∏_j z_j^{ΔX(λ_j)}]`.
    pub fn pgf_increments(&self, grid: &TimeGrid, z: &[Complex64]) -> Result<Complex64> {
        self.check_grid(grid)?;
        if z.len() != grid.d() {
            return Err(Error::domain(format!("{} arguments for a grid of size {}", z.len(), grid.d())));
        }
        if let Some(bad) = z.iter().find(|w| w.norm() > 1.0 + 1e-12) {
            return Err(Error::domain(format!("|z| = {} exceeds 1", bad.norm())));
        }
        Ok(self.pgf_increments_unchecked(grid, z))
    }

    pub(crate) fn pgf_increments_unchecked(&self, grid: &TimeGrid, z: &[Complex64]) -> Complex64 {
        let d = grid.d();
        let one = Complex64::new(1.0, 0.0);
        if d == 0 {
            return one;
        }
        match self {
            CouplingModel::Binary => {
                let mut acc = Complex64::new(1.0 - grid.lambda(d) / 2.0, 0.0);
                for k in 1..=d {
                    acc += grid.delta(k) / 2.0 * z[k - 1] * z[k - 1];
                }
                acc
            }
            CouplingModel::Geometric => {
                let g = |lam: f64, w: Complex64| one / (one + (one - w) * lam);
                let mut acc = g(grid.lambda(1), z[0]);
                for j in 2..=d {
                    let (lj, lp) = (grid.lambda(j), grid.lambda(j - 1));
                    acc *= (1.0 + lp) / (1.0 + lj) + (lj - lp) / (1.0 + lj) * z[j - 1] * g(lj, z[j - 1]);
                }
                acc
            }
            CouplingModel::Poisson => {
                let mut e = Complex64::new(0.0, 0.0);
                for j in 1..=d {
                    e += grid.delta(j) * (z[j - 1] - one);
                }
                e.exp()
            }
            CouplingModel::Tabular(t) => {
                let outs = t.restricted(grid).expect("grid validated");
                outs.iter()
                    .map(|o| o.deltas.iter().zip(z).fold(Complex64::new(o.p, 0.0), |a, (&k, w)| a * w.powu(k as u32)))
                    .sum()
            }
        }
    }

    /// `E[∏_j z_j^{X(λ_j)}]`, through `z_j ↦ ∏_{i≥j} z_i`.
    pub fn pgf_plain(&self, grid: &TimeGrid, z: &[Complex64]) -> Result<Complex64> {
        let mut w = z.to_vec();
        for j in (0..w.len().saturating_sub(1)).rev() {
            w[j] = w[j] * w[j + 1];
        }
        self.pgf_increments(grid, &w)
    }

    /// Marginal pgf `f_λ(s) = E[s^{X(λ)}]` and its derivative, for real `s`.
    pub fn marginal_pgf(&self, lambda: f64, s: f64) -> Result<(f64, f64)> {
        self.check_grid(&TimeGrid::single(lambda)?)?;
        Ok(match self {
            CouplingModel::Binary => (1.0 - lambda / 2.0 + lambda / 2.0 * s * s, lambda * s),
            CouplingModel::Geometric => {
                let den = 1.0 + lambda * (1.0 - s);
                (1.0 / den, lambda / (den * den))
            }
            CouplingModel::Poisson => {
                let v = (lambda * (s - 1.0)).exp();
                (v, lambda * v)
            }
            CouplingModel::Tabular(t) => {
                let m = t.marginal(lambda)?;
                let f = m.iter().map(|&(p, k)| p * s.powi(k as i32)).sum();
                let df = m
                    .iter()
                    .filter(|&&(_, k)| k > 0)
                    .map(|&(p, k)| p * k as f64 * s.powi(k as i32 - 1))
                    .sum();
                (f, df)
            }
        })
    }

    /// `P(X(λ) = m)`.
    pub fn marginal_pmf(&self, lambda: f64, m: u64) -> Result<f64> {
        self.check_grid(&TimeGrid::single(lambda)?)?;
        Ok(match self {
            CouplingModel::Binary => match m {
                0 => 1.0 - lambda / 2.0,
                2 => lambda / 2.0,
                _ => 0.0,
            },
            CouplingModel::Geometric => {
                let r = lambda / (1.0 + lambda);
                r.powf(m as f64) / (1.0 + lambda)
            }
            CouplingModel::Poisson => {
                let lg = m as f64 * lambda.ln() - lambda - ln_factorial(m);
                lg.exp()
            }
            CouplingModel::Tabular(t) => {
                t.marginal(lambda)?.iter().filter(|&&(_, k)| k == m).map(|&(p, _)| p).sum()
            }
        })
    }

    /// Largest support point of `X(λ)` if finite.
    pub fn support_bound(&self, lambda: f64) -> Option<u64> {
        match self {
            CouplingModel::Binary => Some(2),
            CouplingModel::Geometric | CouplingModel::Poisson => None,
            CouplingModel::Tabular(t) => t.marginal(lambda).ok().and_then(|m| m.iter().map(|&(_, k)| k).max()),
        }
    }

    pub fn max_order(&self) -> usize {
        match self {
            CouplingModel::Tabular(_) => usize::MAX,
            _ => MAX_BUILTIN_ORDER,
        }
    }

    /// `Fac^Δ_β(λ[1..d]) = E[∏_j (ΔX(λ_j))_(β_j)]`.
    pub fn factorial_moment(&self, grid: &TimeGrid, beta: &[usize]) -> Result<f64> {
        self.check_grid(grid)?;
        if beta.len() != grid.d() {
            return Err(Error::domain(format!("multi-index of length {} on a grid of size {}", beta.len(), grid.d())));
        }
        match self {
            CouplingModel::Tabular(t) => {
                let outs = t.restricted(grid)?;
                Ok(outs
                    .iter()
                    .map(|o| o.p * o.deltas.iter().zip(beta).map(|(&x, &b)| falling_factorial(x, b)).product::<f64>())
                    .sum())
            }
            _ => {
                let order: usize = beta.iter().sum();
                if order > MAX_BUILTIN_ORDER {
                    return Err(Error::capability(format!("factorial moments of order {order} > {MAX_BUILTIN_ORDER}")));
                }
                Ok(builtin_factorial_moment(self.kind(), grid.points(), beta))
            }
        }
    }

    /// Exact factorial moment with the grid bound to rationals.
    pub fn factorial_moment_exact(&self, lams: &[BigRational], beta: &[usize]) -> Result<BigRational> {
        match self {
            CouplingModel::Tabular(t) => {
                let g = TimeGrid::new(lams.iter().map(Scalar::to_f64).collect())?;
                let outs = t.restricted(&g)?;
                let mut acc = BigRational::from_integer(0.into());
                for o in outs {
                    let mut term = <BigRational as Scalar>::from_f64(o.p);
                    for (&x, &b) in o.deltas.iter().zip(beta) {
                        term = term * <BigRational as Scalar>::from_f64(falling_factorial(x, b));
                    }
                    acc = acc + term;
                }
                Ok(acc)
            }
            _ => Ok(builtin_factorial_moment(self.kind(), lams, beta)),
        }
    }

    /// Monte Carlo estimate of `Fac^Δ_β` from `samples` independent draws.
    pub fn empirical_factorial_moment(&self, grid: &TimeGrid, beta: &[usize], samples: u64, seed: u64) -> Result<Estimate> {
        if samples == 0 {
            return Err(Error::domain("need at least one sample"));
        }
        let s = self.sampler(grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut deltas = vec![0; grid.d()];
        let mut acc = crate::stats::Moments::default();
        for _ in 0..samples {
            s.sample_increments(&mut rng, &mut deltas);
            let v: f64 = deltas.iter().zip(beta).map(|(&x, &b)| falling_factorial(x, b)).product();
            acc.push(v);
        }
        Ok(acc.estimate())
    }

    /// All factorial moments of total order at most `max_order`.
    pub fn factorial_table(&self, grid: &TimeGrid, max_order: usize) -> Result<FactorialMomentTable<f64>> {
        self.check_grid(grid)?;
        FactorialMomentTable::from_fn(grid.points().to_vec(), max_order, |b| self.factorial_moment(grid, b))
    }

    pub fn factorial_table_exact(&self, lams: &[BigRational], max_order: usize) -> Result<FactorialMomentTable<BigRational>> {
        let g = TimeGrid::new(lams.iter().map(Scalar::to_f64).collect())?;
        self.check_grid(&g)?;
        FactorialMomentTable::from_fn(lams.to_vec(), max_order, |b| self.factorial_moment_exact(lams, b))
    }
}

fn ln_factorial(m: u64) -> f64 {
    statrs::function::factorial::ln_factorial(m)
}

/// Closed-form factorial moments of the built-in couplings on a
/// non-decreasing list of times (equal times give zero increments).
pub fn builtin_factorial_moment<S: Scalar>(kind: Kind, lams: &[S], beta: &[usize]) -> S {
    let lam = |j: usize| if j == 0 { S::zero() } else { lams[j - 1].clone() };
    let dl = |j: usize| lam(j) - lam(j - 1);
    match kind {
        Kind::Poisson => (1..=lams.len()).fold(S::one(), |acc, j| acc * dl(j).pow(beta[j - 1] as u32)),
        Kind::Geometric => (1..=lams.len()).fold(S::one(), |acc, j| {
            let r = beta[j - 1];
            if r == 0 {
                return acc;
            }
            let rf = S::from_u64(factorial(r));
            let m = if j == 1 { rf * lam(1).pow(r as u32) } else { rf * lam(j).pow(r as u32 - 1) * dl(j) };
            acc * m
        }),
        Kind::Binary => {
            let nz: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] > 0).collect();
            match nz.as_slice() {
                [] => S::one(),
                [k] if beta[*k] <= 2 => dl(k + 1),
                _ => S::zero(),
            }
        }
        Kind::Tabular => panic!("tabular factorial moments are not closed-form"),
    }
}

/// All multi-indices of length `d` with total at most `max_order`, in
/// graded lexicographic order.
pub fn multi_indices(d: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=max_order {
        let mut cur = vec![0; d];
        compositions(total, 0, &mut cur, &mut out);
    }
    out
}

fn compositions(rem: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos + 1 >= cur.len() {
        if cur.is_empty() {
            if rem == 0 {
                out.push(Vec::new());
            }
            return;
        }
        cur[pos] = rem;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=rem).rev() {
        cur[pos] = k;
        compositions(rem - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Fac^Δ entries indexed by multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialMomentTable<S: Scalar = f64> {
    lambdas: Vec<S>,
    max_order: usize,
    entries: BTreeMap<Vec<usize>, S>,
}

impl<S: Scalar> FactorialMomentTable<S> {
    pub fn from_fn(lambdas: Vec<S>, max_order: usize, mut f: impl FnMut(&[usize]) -> Result<S>) -> Result<Self> {
        let d = lambdas.len();
        let mut entries = BTreeMap::new();
        for b in multi_indices(d, max_order) {
            let v = f(&b)?;
            entries.insert(b, v);
        }
        Ok(FactorialMomentTable { lambdas, max_order, entries })
    }

    pub fn d(&self) -> usize {
        self.lambdas.len()
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// λ_j (1-based) with λ₀ = 0.
    pub fn lambda(&self, j: usize) -> S {
        if j == 0 {
            S::zero()
        } else {
            self.lambdas[j - 1].clone()
        }
    }

    pub fn lambdas(&self) -> &[S] {
        &self.lambdas
    }

    pub fn get(&self, beta: &[usize]) -> Result<S> {
        self.entries.get(beta).cloned().ok_or_else(|| {
            Error::capability(format!("factorial moment {beta:?} not in table (max order {})", self.max_order))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &S)> {
        self.entries.iter()
    }
}
