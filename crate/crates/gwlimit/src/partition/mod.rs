//! Set partitions, moment monomials and the partition expansion of
//! `E[∏_ℓ ∏_{s∈B_ℓ} S_ℓ(V_s)]` into factorial-moment multinomials, plus the
//! linearized moment recursion built on top of it.

mod expand;
mod system;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use expand::{expand_s_product, MultinomialTerm};
pub use system::{
    build_moment_recursion, lemma_rec_bound, moment_system, moment_system_exact, solve_moments,
    BuildOptions, Horizon, LinearMomentSystem, MomentSolution, DEFAULT_MAX_BASIS, DEFAULT_MAX_DEGREE,
};

use crate::error::{Error, Result};

/// A set partition with blocks sorted by their smallest element and
/// elements sorted inside each block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SetPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| format!("{{{}}}", b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// All partitions of `ground` (any order, duplicates ignored), canonically
/// ordered.
pub fn all_partitions(ground: &[usize]) -> Vec<SetPartition> {
    let mut g = ground.to_vec();
    g.sort_unstable();
    g.dedup();
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    grow(&g, 0, &mut blocks, &mut out);
    out.sort();
    out
}

fn grow(g: &[usize], i: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<SetPartition>) {
    if i == g.len() {
        out.push(SetPartition { blocks: blocks.clone() });
        return;
    }
    for b in 0..blocks.len() {
        blocks[b].push(g[i]);
        grow(g, i + 1, blocks, out);
        blocks[b].pop();
    }
    blocks.push(vec![g[i]]);
    grow(g, i + 1, blocks, out);
    blocks.pop();
}

/// Partitions of `ground` into exactly `k` non-empty blocks. The empty set
/// has exactly one partition, with zero blocks.
pub fn enumerate_partitions(ground: &[usize], k: usize) -> Vec<SetPartition> {
    all_partitions(ground).into_iter().filter(|p| p.len() == k).collect()
}

/// Stirling number of the second kind.
pub fn stirling2(n: usize, k: usize) -> u64 {
    let mut row = vec![0u64; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as u64 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[k]
}

pub fn bell(n: usize) -> u64 {
    (0..=n).map(|k| stirling2(n, k)).sum()
}

/// A moment symbol, `W_n(λ_j)` or `ΔW_n(λ_j)` (1-based `j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    W(usize),
    D(usize),
}

impl Atom {
    /// `ΔW(λ₁) = W(λ₁)` under `λ₀ = 0`.
    pub fn canonical(self) -> Atom {
        match self {
            Atom::D(1) => Atom::W(1),
            a => a,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Atom::W(j) | Atom::D(j) => j,
        }
    }

    /// Expectation of the atom alone: `E W = 1`, `E ΔW(λ_{j≥2}) = 0`.
    pub fn mean(self) -> u8 {
        match self.canonical() {
            Atom::W(_) => 1,
            Atom::D(_) => 0,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::W(j) => write!(f, "W{j}"),
            Atom::D(j) => write!(f, "dW{j}"),
        }
    }
}

/// `∏_j W(λ_j)^{a_j} ΔW(λ_j)^{b_j}` stored as the exponent vector
/// `(a_1, …, a_d, b_1, …, b_d)` with `b_1 = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn one(d: usize) -> Self {
        Monomial { exps: vec![0; 2 * d] }
    }

    pub fn from_atoms(d: usize, atoms: &[Atom]) -> Result<Self> {
        let mut m = Monomial::one(d);
        for &a in atoms {
            let a = a.canonical();
            let j = a.index();
            if j == 0 || j > d {
                return Err(Error::domain(format!("atom {a} references a grid index outside 1..={d}")));
            }
            match a {
                Atom::W(j) => m.exps[j - 1] += 1,
                Atom::D(j) => m.exps[d + j - 1] += 1,
            }
        }
        Ok(m)
    }

    /// Parses `W2:1,dW3:2` (name:exponent pairs; `dW`/`DW` for increments).
    pub fn parse(s: &str, d: usize) -> Result<Self> {
        let mut atoms = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (name, exp) = match tok.split_once(':') {
                Some((n, e)) => {
                    (n.trim(), e.trim().parse::<u32>().map_err(|_| Error::parse(format!("bad exponent in '{tok}'")))?)
                }
                None => (tok, 1),
            };
            let (delta, idx) = if let Some(r) = name.strip_prefix("dW").or_else(|| name.strip_prefix("DW")) {
                (true, r)
            } else if let Some(r) = name.strip_prefix('W') {
                (false, r)
            } else {
                return Err(Error::parse(format!("unknown symbol '{name}'")));
            };
            let j: usize = idx.parse().map_err(|_| Error::parse(format!("bad grid index in '{name}'")))?;
            let a = if delta { Atom::D(j) } else { Atom::W(j) };
            atoms.extend(std::iter::repeat_n(a, exp as usize));
        }
        Monomial::from_atoms(d, &atoms)
    }

    pub fn d(&self) -> usize {
        self.exps.len() / 2
    }

    pub fn degree(&self) -> usize {
        self.exps.iter().map(|&e| e as usize).sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    /// Atoms in a fixed order (W before ΔW, increasing index).
    pub fn atoms(&self) -> Vec<Atom> {
        let d = self.d();
        let mut out = Vec::with_capacity(self.degree());
        for j in 1..=d {
            out.extend(std::iter::repeat_n(Atom::W(j), self.exps[j - 1] as usize));
        }
        for j in 1..=d {
            out.extend(std::iter::repeat_n(Atom::D(j), self.exps[d + j - 1] as usize));
        }
        out
    }

    pub fn has_increment(&self) -> bool {
        let d = self.d();
        self.exps[d..].iter().any(|&e| e > 0)
    }

    /// Value at generation 0, where `W₀ ≡ 1` and `ΔW₀(λ_{j≥2}) ≡ 0`.
    pub fn initial_value(&self) -> u8 {
        if self.has_increment() {
            0
        } else {
            1
        }
    }

    pub fn label(&self) -> String {
        if self.degree() == 0 {
            return "1".into();
        }
        let d = self.d();
        let mut parts = Vec::new();
        for (k, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let name = if k < d { format!("W{}", k + 1) } else { format!("dW{}", k - d + 1) };
            parts.push(if e == 1 { name } else { format!("{name}^{e}") });
        }
        parts.join("*")
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.exps.cmp(&other.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A product of expectations of monomials; the empty product is the
/// constant 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Product {
    factors: Vec<Monomial>,
}

impl Product {
    pub fn one() -> Self {
        Product { factors: Vec::new() }
    }

    pub fn new(mut factors: Vec<Monomial>) -> Self {
        factors.sort();
        Product { factors }
    }

    pub fn single(m: Monomial) -> Self {
        Product { factors: vec![m] }
    }

    pub fn factors(&self) -> &[Monomial] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.factors.iter().map(Monomial::degree).sum()
    }

    pub fn times(&self, other: &Product) -> Product {
        let mut f = self.factors.clone();
        f.extend_from_slice(&other.factors);
        Product::new(f)
    }

    pub fn initial_value(&self) -> u8 {
        self.factors.iter().map(Monomial::initial_value).product()
    }

    pub fn label(&self) -> String {
        if self.factors.is_empty() {
            return "1".into();
        }
        self.factors.iter().map(|m| format!("E[{}]", m.label())).collect::<Vec<_>>().join("")
    }
}

impl fmt::Display for Product {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(blocks: &[&[usize]]) -> SetPartition {
        SetPartition { blocks: blocks.iter().map(|b| b.to_vec()).collect() }
    }

    #[test]
    fn four_into_three_canonical_order() {
        let got = enumerate_partitions(&[1, 2, 3, 4], 3);
        let want = vec![
            p(&[&[1], &[2], &[3, 4]]),
            p(&[&[1], &[2, 3], &[4]]),
            p(&[&[1], &[2, 4], &[3]]),
            p(&[&[1, 2], &[3], &[4]]),
            p(&[&[1, 3], &[2], &[4]]),
            p(&[&[1, 4], &[2], &[3]]),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn small_cases() {
        assert_eq!(enumerate_partitions(&[1], 1), vec![p(&[&[1]])]);
        assert_eq!(enumerate_partitions(&[], 0), vec![p(&[])]);
        assert!(enumerate_partitions(&[1, 2], 3).is_empty());
        assert_eq!(enumerate_partitions(&[1, 2, 3, 4, 5], 2).len(), 15);
        assert_eq!(stirling2(5, 2), 15);
        assert_eq!(bell(5), 52);
        assert_eq!(all_partitions(&[1, 2, 3, 4, 5]).len(), 52);
    }

    #[test]
    fn monomial_parse_and_order() {
        let m = Monomial::parse("W2:1,dW3:2", 3).unwrap();
        assert_eq!(m.degree(), 3);
        assert_eq!(m.label(), "W2*dW3^2");
        assert_eq!(Monomial::parse("dW1:2", 2).unwrap(), Monomial::parse("W1:2", 2).unwrap());
        assert!(Monomial::parse("W4:1", 3).is_err());
        assert!(Monomial::parse("X1:1", 3).is_err());
        let a = Monomial::parse("W1:3", 2).unwrap();
        let b = Monomial::parse("W1:1,W2:1", 2).unwrap();
        assert!(b < a, "degree sorts first");
        let c = Monomial::parse("W2:2", 2).unwrap();
        let e = Monomial::parse("W1:2", 2).unwrap();
        assert!(c < e, "then lexicographic exponent vector");
    }

    #[test]
    fn product_canonical() {
        let a = Monomial::parse("W1:2", 2).unwrap();
        let b = Monomial::parse("dW2:2", 2).unwrap();
        assert_eq!(Product::new(vec![a.clone(), b.clone()]), Product::new(vec![b.clone(), a.clone()]));
        assert_eq!(Product::new(vec![a, b]).initial_value(), 0);
        assert_eq!(Product::one().label(), "1");
    }
}
