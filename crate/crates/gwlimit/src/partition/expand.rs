use super::{all_partitions, Atom, Monomial};
use crate::coupling::FactorialMomentTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `coefficient · ∏ E[factor]`, where `unit_factors` counts factors `E W = 1`
/// that were absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialTerm<S: Scalar = f64> {
    pub coefficient: S,
    pub factors: Vec<Monomial>,
    pub unit_factors: usize,
}

impl<S: Scalar> MultinomialTerm<S> {
    pub fn degree(&self) -> usize {
        self.factors.iter().map(Monomial::degree).sum::<usize>() + self.unit_factors
    }
}

/// Expands `E[∏_ℓ ∏_{s∈B_ℓ} S_ℓ(V_s)]`, where `blocks[ℓ−1] = B_ℓ` lists the
/// atoms fed to `S_ℓ`, as `Σ_d Fac^Δ_d ∏_ℓ Σ_{Part(B_ℓ, d_ℓ)} ∏ E[∏ V]`.
/// Single-atom factors are simplified (`E W = 1`, `E ΔW(λ_{j≥2}) = 0`);
/// terms killed by the latter are omitted.
pub fn expand_s_product<S: Scalar>(blocks: &[Vec<Atom>], facs: &FactorialMomentTable<S>) -> Result<Vec<MultinomialTerm<S>>> {
    let d = facs.d();
    if blocks.len() != d {
        return Err(Error::domain(format!("{} blocks for a grid of size {d}", blocks.len())));
    }
    let blocks: Vec<Vec<Atom>> = blocks.iter().map(|b| b.iter().map(|a| a.canonical()).collect()).collect();
    for a in blocks.iter().flatten() {
        if a.index() == 0 || a.index() > d {
            return Err(Error::domain(format!("atom {a} references a grid index outside 1..={d}")));
        }
    }
    let total: usize = blocks.iter().map(Vec::len).sum();

    // Per block: each partition reduced to (block count, factors, units), or
    // dropped when a single ΔW(λ_{j≥2}) appears.
    let mut per_block: Vec<Vec<(usize, Vec<Monomial>, usize)>> = Vec::with_capacity(d);
    for b in &blocks {
        let idx: Vec<usize> = (0..b.len()).collect();
        let mut opts = Vec::new();
        'parts: for part in all_partitions(&idx) {
            let mut factors = Vec::new();
            let mut units = 0;
            for blk in &part.blocks {
                if blk.len() == 1 {
                    match b[blk[0]] {
                        Atom::W(_) => {
                            units += 1;
                            continue;
                        }
                        Atom::D(_) => continue 'parts,
                    }
                }
                let atoms: Vec<Atom> = blk.iter().map(|&s| b[s]).collect();
                factors.push(Monomial::from_atoms(d, &atoms)?);
            }
            opts.push((part.len(), factors, units));
        }
        per_block.push(opts);
    }

    let mut out = Vec::new();
    let mut choice = vec![0usize; d];
    if per_block.iter().any(Vec::is_empty) {
        return Ok(out);
    }
    loop {
        let beta: Vec<usize> = (0..d).map(|l| per_block[l][choice[l]].0).collect();
        let coefficient = facs.get(&beta)?;
        let mut factors = Vec::new();
        let mut unit_factors = 0;
        for l in 0..d {
            let (_, f, u) = &per_block[l][choice[l]];
            factors.extend(f.iter().cloned());
            unit_factors += u;
        }
        factors.sort();
        let term = MultinomialTerm { coefficient, factors, unit_factors };
        assert_eq!(term.degree(), total, "degree must be conserved by the expansion");
        out.push(term);
        // Odometer over the per-block options.
        let mut l = 0;
        loop {
            if l == d {
                return Ok(out);
            }
            choice[l] += 1;
            if choice[l] < per_block[l].len() {
                break;
            }
            choice[l] = 0;
            l += 1;
        }
    }
}

/// Generation-(n+1) atom written through generation-n atoms of children born
/// at each index `ℓ`: `(ℓ, coefficient, child atom)`.
pub(super) fn atom_decomposition<S: Scalar>(a: Atom, facs: &FactorialMomentTable<S>) -> Vec<(usize, S, Atom)> {
    match a.canonical() {
        Atom::W(j) => {
            let inv = S::one() / facs.lambda(j);
            (1..=j).map(|l| (l, inv.clone(), Atom::W(j))).collect()
        }
        Atom::D(j) => {
            let (lj, lp) = (facs.lambda(j), facs.lambda(j - 1));
            let inv = S::one() / lj.clone();
            let cross = -((lj.clone() - lp.clone()) / (lj * lp));
            let mut out = Vec::with_capacity(2 * j - 1);
            for l in 1..j {
                out.push((l, inv.clone(), Atom::D(j)));
                out.push((l, cross.clone(), Atom::W(j - 1)));
            }
            out.push((j, inv, Atom::W(j)));
            out
        }
    }
}
