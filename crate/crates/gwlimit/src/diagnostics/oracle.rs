use std::collections::HashMap;

use rand::Rng;

use crate::coupling::{Outcome, TabularModel};
use crate::error::{Error, Result};
use crate::partition::{Atom, Monomial, MultinomialTerm};

/// Placeholder values for generation-`n` moments `E[∏ V]`, subject only to
/// `E W = 1` and `E ΔW(λ_{j≥2}) = 0`.
#[derive(Debug, Clone, Default)]
pub struct MomentAssignment {
    values: HashMap<Monomial, f64>,
}

impl MomentAssignment {
    /// Independent uniform values in `[0.5, 2)` for every monomial of degree
    /// 2 to `max_degree` over `d` grid points.
    pub fn random<R: Rng + ?Sized>(d: usize, max_degree: usize, rng: &mut R) -> Self {
        let mut values = HashMap::new();
        let mut exps = vec![0u32; 2 * d];
        loop {
            let deg: u32 = exps.iter().sum();
            // ΔW(λ₁) is W(λ₁); keep its slot empty.
            if deg >= 2 && deg as usize <= max_degree && exps[d] == 0 {
                let atoms: Vec<Atom> = (0..2 * d)
                    .flat_map(|s| {
                        let a = if s < d { Atom::W(s + 1) } else { Atom::D(s - d + 1) };
                        std::iter::repeat_n(a, exps[s] as usize)
                    })
                    .collect();
                let m = Monomial::from_atoms(d, &atoms).expect("indices in range");
                values.insert(m, rng.random_range(0.5..2.0));
            }
            let mut k = 0;
            while k < exps.len() {
                exps[k] += 1;
                if exps[k] as usize <= max_degree {
                    break;
                }
                exps[k] = 0;
                k += 1;
            }
            if k == exps.len() {
                break;
            }
        }
        MomentAssignment { values }
    }

    pub fn value(&self, m: &Monomial) -> Result<f64> {
        match m.degree() {
            0 => Ok(1.0),
            1 => Ok(m.atoms()[0].mean() as f64),
            _ => self
                .values
                .get(m)
                .copied()
                .ok_or_else(|| Error::domain(format!("no placeholder for {}", m.label()))),
        }
    }

    /// `Σ coefficient · ∏ E[factor]` for an expansion.
    pub fn evaluate(&self, terms: &[MultinomialTerm<f64>]) -> Result<f64> {
        let mut s = 0.0;
        for t in terms {
            let mut v = t.coefficient;
            for f in &t.factors {
                v *= self.value(f)?;
            }
            s += v;
        }
        Ok(s)
    }
}

/// `E[∏_ℓ ∏_{s∈B_ℓ} S_ℓ(V_s)]` by enumeration: over the offspring outcomes,
/// and for each outcome over every assignment of the atoms of `B_ℓ` to the
/// `ΔX_ℓ` children born at `ℓ`. Children are independent copies, so an
/// assignment contributes the product over children of the moment of the
/// atoms it carries.
pub fn brute_force_s_product(outcomes: &[Outcome], blocks: &[Vec<Atom>], moments: &MomentAssignment) -> Result<f64> {
    let d = blocks.len();
    let mut total = 0.0;
    for o in outcomes {
        if o.deltas.len() != d {
            return Err(Error::domain("outcome length differs from the number of blocks"));
        }
        let mut prod = o.p;
        for (l, block) in blocks.iter().enumerate() {
            prod *= block_sum(d, o.deltas[l] as usize, block, moments)?;
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    Ok(total)
}

fn block_sum(d: usize, children: usize, block: &[Atom], moments: &MomentAssignment) -> Result<f64> {
    if block.is_empty() {
        return Ok(1.0);
    }
    if children == 0 {
        return Ok(0.0);
    }
    let k = block.len();
    let mut assign = vec![0usize; k];
    let mut sum = 0.0;
    loop {
        let mut v = 1.0;
        for c in 0..children {
            let atoms: Vec<Atom> = (0..k).filter(|&s| assign[s] == c).map(|s| block[s]).collect();
            if !atoms.is_empty() {
                v *= moments.value(&Monomial::from_atoms(d, &atoms)?)?;
            }
        }
        sum += v;
        let mut s = 0;
        while s < k {
            assign[s] += 1;
            if assign[s] < children {
                break;
            }
            assign[s] = 0;
            s += 1;
        }
        if s == k {
            return Ok(sum);
        }
    }
}

/// A random valid tabular coupling on `d` points with increments in
/// `0..=max_increment` and at most `max_outcomes` outcomes.
pub fn random_tabular<R: Rng + ?Sized>(d: usize, max_increment: u64, max_outcomes: usize, rng: &mut R) -> TabularModel {
    loop {
        let n = rng.random_range(2..=max_outcomes.max(2));
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut outcomes: Vec<Outcome> = weights
            .iter()
            .map(|w| Outcome { p: w / total, deltas: (0..d).map(|_| rng.random_range(0..=max_increment)).collect() })
            .collect();
        // Absorb rounding so that the probabilities sum to one.
        let head: f64 = outcomes[1..].iter().map(|o| o.p).sum();
        outcomes[0].p = 1.0 - head;
        if let Ok(m) = TabularModel::from_outcomes(outcomes) {
            return m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingModel;
    use crate::partition::expand_s_product;
    use rand::SeedableRng;

    #[test]
    fn matches_expansion_on_a_fixed_layout() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let t = random_tabular(2, 3, 3, &mut rng);
        let grid = t.grid.clone();
        let model = CouplingModel::Tabular(t.clone());
        let facs = model.factorial_table(&grid, 4).unwrap();
        let mom = MomentAssignment::random(2, 4, &mut rng);
        let blocks = vec![vec![Atom::W(1), Atom::D(2)], vec![Atom::W(2), Atom::D(2)]];
        let a = brute_force_s_product(&t.outcomes, &blocks, &mom).unwrap();
        let b = mom.evaluate(&expand_s_product(&blocks, &facs).unwrap()).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }
}
