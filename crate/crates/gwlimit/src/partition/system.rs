use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use num_rational::BigRational;
use serde::Serialize;

use super::expand::atom_decomposition;
use super::{expand_s_product, Atom, Monomial, Product};
use crate::coupling::{CouplingModel, FactorialMomentTable, TimeGrid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_DEGREE: usize = 4;
pub const DEFAULT_MAX_BASIS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BuildOptions {
    pub max_degree: usize,
    pub max_basis: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_degree: DEFAULT_MAX_DEGREE, max_basis: DEFAULT_MAX_BASIS }
    }
}

/// `V_n = A·V_{n−1} + U` over a basis of products of moments.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMomentSystem<S: Scalar = f64> {
    pub basis: Vec<Product>,
    pub a: Vec<Vec<S>>,
    pub u: Vec<S>,
    pub target: usize,
    pub lambdas: Vec<S>,
}

type Poly<S> = BTreeMap<Product, S>;

struct Engine<'a, S: Scalar> {
    facs: &'a FactorialMomentTable<S>,
    mono_cache: HashMap<Monomial, Poly<S>>,
    block_cache: HashMap<Vec<Vec<Atom>>, Poly<S>>,
}

impl<'a, S: Scalar> Engine<'a, S> {
    fn new(facs: &'a FactorialMomentTable<S>) -> Self {
        Engine { facs, mono_cache: HashMap::new(), block_cache: HashMap::new() }
    }

    /// `E[∏_ℓ∏_{B_ℓ} S_ℓ(V)]` as a polynomial in generation-n products.
    fn blocks(&mut self, blocks: Vec<Vec<Atom>>) -> Result<Poly<S>> {
        if let Some(p) = self.block_cache.get(&blocks) {
            return Ok(p.clone());
        }
        let mut poly = Poly::new();
        for t in expand_s_product(&blocks, self.facs)? {
            let key = Product::new(t.factors);
            let e = poly.entry(key).or_insert_with(S::zero);
            *e = e.clone() + t.coefficient;
        }
        self.block_cache.insert(blocks, poly.clone());
        Ok(poly)
    }

    /// Generation-(n+1) expectation of a monomial.
    fn monomial(&mut self, m: &Monomial) -> Result<Poly<S>> {
        if let Some(p) = self.mono_cache.get(m) {
            return Ok(p.clone());
        }
        let d = self.facs.d();
        let atoms = m.atoms();
        let options: Vec<Vec<(usize, S, Atom)>> = atoms.iter().map(|&a| atom_decomposition(a, self.facs)).collect();
        // Gather the choice tuples by block layout first, so each layout is
        // expanded once.
        let mut layouts: BTreeMap<Vec<Vec<Atom>>, S> = BTreeMap::new();
        let mut choice = vec![0usize; atoms.len()];
        loop {
            let mut blocks: Vec<Vec<Atom>> = vec![Vec::new(); d];
            let mut coef = S::one();
            for (k, &c) in choice.iter().enumerate() {
                let (l, ref w, child) = options[k][c];
                coef = coef * w.clone();
                blocks[l - 1].push(child);
            }
            blocks.iter_mut().for_each(|b| b.sort());
            let e = layouts.entry(blocks).or_insert_with(S::zero);
            *e = e.clone() + coef;
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < options[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
        let mut poly = Poly::new();
        for (blocks, coef) in layouts {
            for (key, v) in self.blocks(blocks)? {
                let e = poly.entry(key).or_insert_with(S::zero);
                *e = e.clone() + coef.clone() * v;
            }
        }
        self.mono_cache.insert(m.clone(), poly.clone());
        Ok(poly)
    }

    fn product(&mut self, p: &Product) -> Result<Poly<S>> {
        let mut acc: Poly<S> = Poly::new();
        acc.insert(Product::one(), S::one());
        for m in p.factors() {
            let e = self.monomial(m)?;
            let mut next = Poly::new();
            for (k1, v1) in &acc {
                for (k2, v2) in &e {
                    let key = k1.times(k2);
                    let slot = next.entry(key).or_insert_with(S::zero);
                    *slot = slot.clone() + v1.clone() * v2.clone();
                }
            }
            acc = next;
        }
        Ok(acc)
    }
}

/// Closes the moment recursion for `target` by repeated expansion, adding
/// every product that appears until the basis is stable. The basis is
/// structural: products enter whatever their numeric coefficient.
pub fn build_moment_recursion<S: Scalar>(
    target: &Monomial,
    facs: &FactorialMomentTable<S>,
    opts: BuildOptions,
) -> Result<LinearMomentSystem<S>> {
    let d = facs.d();
    if target.d() != d {
        return Err(Error::domain(format!("target over {} grid points, table over {d}", target.d())));
    }
    let deg = target.degree();
    if deg == 0 {
        return Err(Error::domain("target has degree 0 (it is the constant 1)"));
    }
    if deg > opts.max_degree {
        return Err(Error::capability(format!("target degree {deg} exceeds the configured maximum {}", opts.max_degree)));
    }
    if facs.max_order() < deg {
        return Err(Error::capability(format!(
            "factorial moments up to order {deg} needed, table has {}",
            facs.max_order()
        )));
    }
    let lambdas = facs.lambdas().to_vec();
    if deg == 1 {
        // The mean is preserved exactly.
        return Ok(LinearMomentSystem {
            basis: vec![Product::single(target.clone())],
            a: vec![vec![S::one()]],
            u: vec![S::zero()],
            target: 0,
            lambdas,
        });
    }
    let mut engine = Engine::new(facs);
    let start = Product::single(target.clone());
    let mut index: HashMap<Product, usize> = HashMap::new();
    let mut basis = vec![start.clone()];
    index.insert(start.clone(), 0);
    let mut rows: Vec<Poly<S>> = Vec::new();
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let poly = engine.product(&p)?;
        for key in poly.keys() {
            if key.is_one() || index.contains_key(key) {
                continue;
            }
            if key.degree() > deg {
                return Err(Error::domain(format!("expansion produced {key} of degree above {deg}")));
            }
            if basis.len() >= opts.max_basis {
                return Err(Error::capability(format!("moment basis exceeds {} products", opts.max_basis)));
            }
            index.insert(key.clone(), basis.len());
            basis.push(key.clone());
            queue.push_back(key.clone());
        }
        rows.push(poly);
    }
    let n = basis.len();
    let mut a = vec![vec![S::zero(); n]; n];
    let mut u = vec![S::zero(); n];
    for (i, poly) in rows.into_iter().enumerate() {
        for (key, v) in poly {
            if key.is_one() {
                u[i] = u[i].clone() + v;
            } else {
                let j = index[&key];
                a[i][j] = a[i][j].clone() + v;
            }
        }
    }
    Ok(LinearMomentSystem { basis, a, u, target: 0, lambdas })
}

/// Builds the recursion for `target` on `grid` in double precision.
pub fn moment_system(model: &CouplingModel, grid: &TimeGrid, target: &Monomial) -> Result<LinearMomentSystem<f64>> {
    let facs = model.factorial_table(grid, target.degree().max(1))?;
    build_moment_recursion(target, &facs, BuildOptions::default())
}

/// Same with the grid bound to rationals and exact arithmetic throughout.
pub fn moment_system_exact(
    model: &CouplingModel,
    lams: &[BigRational],
    target: &Monomial,
) -> Result<LinearMomentSystem<BigRational>> {
    let facs = model.factorial_table_exact(lams, target.degree().max(1))?;
    build_moment_recursion(target, &facs, BuildOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Horizon {
    Generation(usize),
    Limit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSolution<S: Scalar = f64> {
    pub value: S,
    pub vector: Vec<S>,
    pub spectral_radius: Option<f64>,
}

impl<S: Scalar> LinearMomentSystem<S> {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn target_degree(&self) -> usize {
        self.basis[self.target].degree()
    }

    /// Coefficient of the target in its own recursion.
    pub fn self_coefficient(&self) -> S {
        self.a[self.target][self.target].clone()
    }

    /// Values of the basis products at generation 0.
    pub fn initial_vector(&self) -> Vec<S> {
        self.basis.iter().map(|p| if p.initial_value() == 1 { S::one() } else { S::zero() }).collect()
    }

    pub fn step(&self, v: &[S]) -> Vec<S> {
        self.a
            .iter()
            .zip(&self.u)
            .map(|(row, u)| row.iter().zip(v).fold(u.clone(), |acc, (x, y)| acc + x.clone() * y.clone()))
            .collect()
    }

    pub fn a_f64(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.a[i][j].to_f64())
    }

    /// Largest eigenvalue modulus of `A`, taken over the diagonal blocks of
    /// its block-triangular form (strongly connected components of the
    /// sparsity graph).
    pub fn spectral_radius(&self) -> f64 {
        let m = self.a_f64();
        let n = m.nrows();
        let mut g = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != 0.0 {
                    g.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        tarjan_scc(&g)
            .iter()
            .map(|comp| {
                let idx: Vec<usize> = comp.iter().map(|v| v.index()).collect();
                block_spectral_radius(&m.select_rows(&idx).select_columns(&idx))
            })
            .fold(0.0, f64::max)
    }

    /// Values for generations `0..=n` of the target.
    pub fn trajectory(&self, n: usize) -> Vec<S> {
        let mut v = self.initial_vector();
        let mut out = vec![v[self.target].clone()];
        for _ in 0..n {
            v = self.step(&v);
            out.push(v[self.target].clone());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "basis": self.basis.iter().map(Product::label).collect::<Vec<_>>(),
            "a": self.a.iter().map(|r| r.iter().map(Scalar::to_f64).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "u": self.u.iter().map(Scalar::to_f64).collect::<Vec<_>>(),
            "target": self.target,
            "lambdas": self.lambdas.iter().map(Scalar::to_f64).collect::<Vec<_>>(),
        })
    }
}

fn block_spectral_radius(b: &DMatrix<f64>) -> f64 {
    if b.nrows() == 1 {
        return b[(0, 0)].abs();
    }
    if let Some(schur) = b.clone().try_schur(f64::EPSILON, 10_000) {
        return schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    // Gelfand's formula by repeated squaring, ‖B^(2^k)‖^(2^-k).
    let mut p = b.clone();
    let mut log_scale = 0.0;
    let mut est = f64::INFINITY;
    for k in 1..=40 {
        p = &p * &p;
        let norm = p.norm();
        if norm == 0.0 {
            return 0.0;
        }
        p /= norm;
        log_scale = 2.0 * log_scale + norm.ln();
        est = (log_scale / 2f64.powi(k)).exp();
    }
    est
}

/// Solves the recursion at generation `n` by iteration from the initial
/// vector, or in the limit through `(I − A)P = U`.
pub fn solve_moments<S: Scalar>(system: &LinearMomentSystem<S>, horizon: Horizon) -> Result<MomentSolution<S>> {
    if system.target_degree() == 1 {
        let v = system.initial_vector();
        return Ok(MomentSolution { value: v[system.target].clone(), vector: v, spectral_radius: None });
    }
    match horizon {
        Horizon::Generation(n) => {
            let mut v = system.initial_vector();
            for _ in 0..n {
                v = system.step(&v);
            }
            Ok(MomentSolution { value: v[system.target].clone(), vector: v, spectral_radius: None })
        }
        Horizon::Limit => {
            let rho = system.spectral_radius();
            if !(rho < 1.0 - 1e-9) {
                return Err(Error::Singular { spectral_radius: rho });
            }
            let n = system.len();
            let p = if S::is_exact() {
                let mut m: Vec<Vec<S>> = (0..n)
                    .map(|i| (0..n).map(|j| if i == j { S::one() - system.a[i][j].clone() } else { -system.a[i][j].clone() }).collect())
                    .collect();
                gauss_exact(&mut m, system.u.clone()).ok_or(Error::Singular { spectral_radius: rho })?
            } else {
                let m = DMatrix::identity(n, n) - system.a_f64();
                let u = DVector::from_iterator(n, system.u.iter().map(Scalar::to_f64));
                let x = m.lu().solve(&u).ok_or(Error::Singular { spectral_radius: rho })?;
                x.iter().map(|&v| S::from_f64(v)).collect()
            };
            Ok(MomentSolution { value: p[system.target].clone(), vector: p, spectral_radius: Some(rho) })
        }
    }
}

/// Gaussian elimination in exact arithmetic.
fn gauss_exact<S: Scalar>(m: &mut [Vec<S>], mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        b.swap(col, piv);
        let p = m[col][col].clone();
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone() / p.clone();
            for c in col..n {
                let t = f.clone() * m[col][c].clone();
                m[r][c] = m[r][c].clone() - t;
            }
            b[r] = b[r].clone() - f * b[col].clone();
        }
    }
    let mut x = vec![S::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r].clone();
        for c in r + 1..n {
            s = s - m[r][c].clone() * x[c].clone();
        }
        x[r] = s / m[r][r].clone();
    }
    Some(x)
}

/// `Uₙ ≤ Aⁿ U₀ + B(1 − Aⁿ)/(1 − A)` for `U_{k+1} ≤ A U_k + B`; `None` means
/// the supremum over all `n`.
pub fn lemma_rec_bound(u0: f64, a: f64, b: f64, n: Option<u64>) -> Result<f64> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::domain(format!("contraction factor {a} outside [0, 1)")));
    }
    if b < 0.0 {
        return Err(Error::domain("B must be non-negative"));
    }
    Ok(match n {
        // The bound is monotone in n and tends to B/(1 − A).
        None => u0.max(b / (1.0 - a)),
        Some(n) => {
            let an = a.powf(n as f64);
            an * u0 + b * (1.0 - an) / (1.0 - a)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rec_bound_examples() {
        assert_eq!(lemma_rec_bound(0.0, 0.5, 1.0, None).unwrap(), 2.0);
        assert!((lemma_rec_bound(7.0, 0.5, 0.0, Some(3)).unwrap() - 0.875).abs() < 1e-15);
        let mut u = 1.0;
        for _ in 0..10 {
            u = 0.9 * u + 0.1;
        }
        assert!((lemma_rec_bound(1.0, 0.9, 0.1, Some(10)).unwrap() - u).abs() < 1e-12);
        assert!(lemma_rec_bound(1.0, 1.0, 0.1, Some(1)).is_err());
    }

    #[test]
    fn second_moment_recursion_on_two_points() {
        let grid = TimeGrid::new(vec![1.5, 2.0]).unwrap();
        let t = Monomial::parse("W1:2", 2).unwrap();
        for model in CouplingModel::builtins() {
            let sys = moment_system(&model, &grid, &t).unwrap();
            let f20 = model.factorial_moment(&grid, &[2, 0]).unwrap();
            let l1 = 1.5;
            assert_eq!(sys.len(), 1);
            assert!((sys.self_coefficient() - 1.0 / l1).abs() < 1e-15);
            assert!((sys.u[0] - f20 / (l1 * l1)).abs() < 1e-15);
            let lim = solve_moments(&sys, Horizon::Limit).unwrap().value;
            assert!((lim - f20 / (l1 * (l1 - 1.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_one_targets() {
        let grid = TimeGrid::new(vec![1.5, 2.0]).unwrap();
        for s in ["W2:1", "dW2:1", "W1:1"] {
            let t = Monomial::parse(s, 2).unwrap();
            let sys = moment_system(&CouplingModel::Poisson, &grid, &t).unwrap();
            assert_eq!(sys.len(), 1);
            let want = if s.starts_with('d') { 0.0 } else { 1.0 };
            assert_eq!(solve_moments(&sys, Horizon::Limit).unwrap().value, want);
            assert_eq!(solve_moments(&sys, Horizon::Generation(7)).unwrap().value, want);
        }
        assert!(moment_system(&CouplingModel::Poisson, &grid, &Monomial::one(2)).is_err());
    }

    #[test]
    fn generation_zero_pure_w_is_one() {
        let grid = TimeGrid::new(vec![1.5, 2.0, 2.5]).unwrap();
        let t = Monomial::parse("W1:1,W3:2", 3).unwrap();
        let sys = moment_system(&CouplingModel::Geometric, &grid, &t).unwrap();
        assert_eq!(solve_moments(&sys, Horizon::Generation(0)).unwrap().value, 1.0);
    }

    #[test]
    fn basis_bound_enforced() {
        let grid = TimeGrid::new(vec![1.2, 1.5, 1.9]).unwrap();
        let facs = CouplingModel::Poisson.factorial_table(&grid, 4).unwrap();
        let t = Monomial::parse("dW2:2,dW3:2", 3).unwrap();
        let opts = BuildOptions { max_basis: 10, ..Default::default() };
        assert!(matches!(build_moment_recursion(&t, &facs, opts), Err(Error::Capability(_))));
        let opts = BuildOptions { max_degree: 3, ..Default::default() };
        assert!(matches!(build_moment_recursion(&t, &facs, opts), Err(Error::Capability(_))));
    }
}
