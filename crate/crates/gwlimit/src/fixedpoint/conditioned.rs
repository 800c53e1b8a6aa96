use serde::Serialize;
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::coupling::{CouplingModel, TimeGrid};
use crate::error::{Error, Result};
use crate::partition::all_partitions;

pub const MAX_CONDITIONED_ORDER: usize = 6;

/// Mass the weights must reach before the law counts as complete.
const MASS_TOL: f64 = 1e-10;

/// Offspring law of the individuals with an infinite line of descent,
/// `g_λ(s) = (f_λ(q + (1−q)s) − q)/(1 − q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedLaw {
    pub lambda: f64,
    pub q: f64,
    /// `weights[j−1] = p_j(λ)` for `j = 1..=J_max`; `p₀ = 0`.
    pub weights: Vec<f64>,
    pub truncation_mass: f64,
    pub warning: Option<String>,
}

impl ConditionedLaw {
    pub fn p(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.weights.get(j - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// `g_λ(s)` from the (truncated) weights.
    pub fn pgf(&self, s: f64) -> f64 {
        self.weights.iter().rev().fold(0.0, |acc, p| (acc + p) * s)
    }
}

pub fn conditioned_offspring_law(model: &CouplingModel, lambda: f64, q: f64, j_max: usize) -> Result<ConditionedLaw> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::domain(format!("q = {q} outside [0, 1)")));
    }
    if j_max == 0 {
        return Err(Error::domain("J_max must be at least 1"));
    }
    let weights: Vec<f64> = match model {
        CouplingModel::Poisson => {
            let a = lambda * (1.0 - q);
            let e = (lambda * (q - 1.0)).exp();
            (1..=j_max)
                .map(|j| {
                    let lg = (j as f64 - 1.0) * a.ln() - ln_factorial(j as u64);
                    lambda * lg.exp() * e
                })
                .collect()
        }
        _ => {
            let pmf = pmf_table(model, lambda)?;
            (1..=j_max)
                .map(|j| {
                    let mut s = 0.0;
                    for (m, &pm) in pmf.iter().enumerate().skip(j) {
                        if pm == 0.0 {
                            continue;
                        }
                        if q == 0.0 {
                            if m == j {
                                s += pm;
                            }
                            continue;
                        }
                        s += pm * (ln_binomial(m as u64, j as u64) + (m - j) as f64 * q.ln()).exp();
                    }
                    s * (1.0 - q).powi(j as i32 - 1)
                })
                .collect()
        }
    };
    let truncation_mass = (1.0 - weights.iter().sum::<f64>()).max(0.0);
    let warning = (truncation_mass > MASS_TOL)
        .then(|| format!("J_max = {j_max} leaves mass {truncation_mass:.3e} beyond the truncation"));
    Ok(ConditionedLaw { lambda, q, weights, truncation_mass, warning })
}

/// `P(X(λ) = m)` for `m` up to the point where the remaining mass is
/// negligible.
fn pmf_table(model: &CouplingModel, lambda: f64) -> Result<Vec<f64>> {
    if let Some(b) = model.support_bound(lambda) {
        return (0..=b).map(|m| model.marginal_pmf(lambda, m)).collect();
    }
    let mut out = Vec::new();
    let mut cum = 0.0;
    let mut m = 0;
    while cum < 1.0 - 1e-17 && m < 100_000 {
        let p = model.marginal_pmf(lambda, m)?;
        cum += p;
        out.push(p);
        m += 1;
    }
    Ok(out)
}

/// Moments `E[Ψ^k]`, `k = 0..=order`, of the survival-conditioned limit.
///
/// With `F_r = E[(Y)_r] = (1−q)^{r−1} E[(X(λ))_r]` the factorial moments of
/// the conditioned law, expanding `(Σ_{i≤Y} V_i)^k` over set partitions of
/// the exponent gives `λ^k μ_k = Σ_π F_{|π|} ∏_{B∈π} μ_{|B|}`. The one-block
/// partition contributes `λ μ_k`, so each `μ_k` for `k ≥ 2` solves a linear
/// equation in the lower moments. `μ₁ = 1/(1−q)` from `E W = 1`.
pub fn conditioned_moments(model: &CouplingModel, lambda: f64, q: f64, order: usize) -> Result<Vec<f64>> {
    if order > MAX_CONDITIONED_ORDER {
        return Err(Error::capability(format!("order {order} above {MAX_CONDITIONED_ORDER}")));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::domain(format!("q = {q} outside [0, 1)")));
    }
    if !(lambda > 1.0) {
        return Err(Error::domain("λ must exceed 1"));
    }
    let grid = TimeGrid::single(lambda)?;
    let mut fac = vec![1.0];
    for r in 1..=order {
        fac.push((1.0 - q).powi(r as i32 - 1) * model.factorial_moment(&grid, &[r])?);
    }
    let mut mu = vec![1.0];
    if order >= 1 {
        mu.push(1.0 / (1.0 - q));
    }
    for k in 2..=order {
        let ground: Vec<usize> = (0..k).collect();
        let rhs: f64 = all_partitions(&ground)
            .iter()
            .filter(|p| p.len() >= 2)
            .map(|p| fac[p.len()] * p.blocks.iter().map(|b| mu[b.len()]).product::<f64>())
            .sum();
        mu.push(rhs / (lambda.powi(k as i32) - lambda));
    }
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::extinction_probability;

    #[test]
    fn binary_law_and_moments() {
        for l in [1.2, 1.5, 1.9] {
            let q = (2.0 - l) / l;
            let law = conditioned_offspring_law(&CouplingModel::Binary, l, q, 4).unwrap();
            assert!((law.p(1) - (2.0 - l)).abs() < 1e-14);
            assert!((law.p(2) - (l - 1.0)).abs() < 1e-14);
            assert_eq!(law.p(0), 0.0);
            assert!(law.warning.is_none());
            let mu = conditioned_moments(&CouplingModel::Binary, l, q, 2).unwrap();
            assert!((mu[1] - l / (2.0 * (l - 1.0))).abs() < 1e-13);
            assert!((mu[2] - (l / 2.0) / (l - 1.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_closed_form_matches_generic_sum() {
        let l = 2.0;
        let q = extinction_probability(&CouplingModel::Poisson, l, 1e-15).unwrap();
        let law = conditioned_offspring_law(&CouplingModel::Poisson, l, q, 60).unwrap();
        let pmf = pmf_table(&CouplingModel::Poisson, l).unwrap();
        for j in 1..10 {
            let generic: f64 = (j..pmf.len())
                .map(|m| pmf[m] * (ln_binomial(m as u64, j as u64) + (m - j) as f64 * q.ln()).exp())
                .sum::<f64>()
                * (1.0 - q).powi(j as i32 - 1);
            assert!((generic - law.p(j)).abs() < 1e-13, "j = {j}");
        }
        assert!(law.truncation_mass < 1e-12);
    }

    #[test]
    fn mean_is_lambda_and_matches_pgf_slope() {
        for model in CouplingModel::builtins() {
            let l = 1.7;
            let q = extinction_probability(&model, l, 1e-15).unwrap();
            let law = conditioned_offspring_law(&model, l, q, 400).unwrap();
            assert!(law.truncation_mass < 1e-10, "{model:?}");
            assert!((law.mean() - l).abs() < 1e-8, "{model:?}");
            let h = 1e-5;
            let slope = (law.pgf(1.0) - law.pgf(1.0 - h)) / h;
            assert!((slope - law.mean()).abs() < 1e-3 * l);
        }
    }

    #[test]
    fn truncation_warning() {
        let law = conditioned_offspring_law(&CouplingModel::Geometric, 3.0, 1.0 / 3.0, 3).unwrap();
        assert!(law.warning.is_some());
    }

    #[test]
    fn poisson_quoted_moments() {
        for l in [1.5, 2.0, 3.0] {
            let q = extinction_probability(&CouplingModel::Poisson, l, 1e-15).unwrap();
            let mu = conditioned_moments(&CouplingModel::Poisson, l, q, 3).unwrap();
            assert!((mu[2] - l / ((1.0 - q) * (l - 1.0))).abs() < 1e-10);
            let third = l * l * (l + 2.0) / ((l + 1.0) * (l - 1.0).powi(2) * (1.0 - q));
            assert!((mu[3] - third).abs() < 1e-9);
        }
    }
}
