use std::io::Write;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Report;
use crate::coupling::{builtin_factorial_moment, multi_indices, CouplingModel, Kind};
use crate::error::{Error, Result};

/// `E[ΔX(λ₃)·X(λ₃)³] = Σ c_β Fac^Δ_β(λ₁, λ₂, λ₃)`.
pub const IDENTITY_TERMS: [(u32, [usize; 3]); 20] = [
    (1, [0, 0, 4]),
    (1, [0, 0, 1]),
    (1, [3, 0, 1]),
    (1, [0, 3, 1]),
    (7, [1, 0, 1]),
    (7, [0, 0, 2]),
    (7, [0, 1, 1]),
    (12, [1, 1, 1]),
    (12, [0, 1, 2]),
    (12, [1, 0, 2]),
    (6, [1, 1, 2]),
    (6, [0, 0, 3]),
    (6, [0, 2, 1]),
    (6, [2, 0, 1]),
    (3, [0, 1, 3]),
    (3, [2, 1, 1]),
    (3, [1, 2, 1]),
    (3, [2, 0, 2]),
    (3, [0, 2, 2]),
    (3, [1, 0, 3]),
];

/// Fitted constant of one inequality family with its worst triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HMomFamily {
    pub name: String,
    /// Smallest `C` with `value ≤ C·width^exponent` on all sampled triples.
    pub constant: f64,
    pub worst_triple: [f64; 3],
    pub worst_index: Option<[usize; 3]>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HMomCertificate {
    pub model: String,
    pub interval: [f64; 2],
    pub kappa: f64,
    pub triples: usize,
    pub seed: u64,
    /// `Fac_{x,y,z} ≤ C(λ₃−λ₁)^κ`, `1 ≤ x+y+z ≤ 4`, `y ≥ 1` or `z ≥ 1`.
    pub dsdity: HMomFamily,
    /// `Fac_{0,y,z} ≤ C₂(λ₃−λ₁)^{2κ}`, `y, z ∈ {1, 2}`.
    pub dsdity2: HMomFamily,
    /// `E[ΔX(λ₂)²ΔX(λ₃)²] ≤ C′(λ₃−λ₁)^{2κ}`.
    pub easy1: HMomFamily,
    /// `E[ΔX(λ₃)X(λ₃)³] ≤ C′(λ₃−λ₂)^κ`.
    pub easy2: HMomFamily,
    /// `sup E[ΔX(λ₃)X(λ₃)³]/(λ₃−λ₂)`, evaluated in exact arithmetic.
    pub easy2_linear: f64,
    /// Largest relative gap between the factorial-moment identity and a
    /// direct evaluation from the marginal laws.
    pub identity_max_rel_error: f64,
    pub identity_passed: bool,
    pub passed: bool,
}

const IDENTITY_TOL: f64 = 1e-9;

pub fn identity_from_factorial_moments(kind: Kind, lams: &[f64; 3]) -> f64 {
    IDENTITY_TERMS.iter().map(|(c, b)| *c as f64 * builtin_factorial_moment(kind, lams, b)).sum()
}

fn identity_exact(kind: Kind, lams: &[BigRational; 3]) -> BigRational {
    IDENTITY_TERMS
        .iter()
        .map(|(c, b)| BigRational::from_integer((*c).into()) * builtin_factorial_moment(kind, lams, b))
        .fold(BigRational::zero(), |a, b| a + b)
}

/// Raw moments `E[Y^k]`, `k = 0..=4`, by summing a pmf until the tail
/// mass is negligible.
fn raw_moments(pmf: impl Fn(u64) -> f64) -> [f64; 5] {
    let mut m = [0.0; 5];
    let mut mass = 0.0;
    let mut y = 0u64;
    loop {
        let p = pmf(y);
        mass += p;
        let yf = y as f64;
        for (k, slot) in m.iter_mut().enumerate() {
            *slot += p * yf.powi(k as i32);
        }
        y += 1;
        // Past twice the mean both pmfs decay geometrically, so a negligible
        // fourth-moment term bounds the tail.
        if (yf > 2.0 * m[1] / mass + 10.0 && p * yf.powi(4) <= 1e-20 * m[4]) || y > 1_000_000 {
            break;
        }
    }
    m
}

/// `E[ΔX(λ₃)·X(λ₃)³]` computed without factorial moments: from the outcome
/// enumeration for the binary coupling, and from the independence of
/// `X(λ₂)` and `ΔX(λ₃)` with their marginal pmfs otherwise.
pub fn identity_direct(model: &CouplingModel, lams: &[f64; 3]) -> Result<f64> {
    let [l1, l2, l3] = *lams;
    match model {
        CouplingModel::Binary => {
            // X jumps from 0 to 2 at the first index k with U < λ_k/2.
            let probs = [l1 / 2.0, (l2 - l1) / 2.0, (l3 - l2) / 2.0];
            let mut e = 0.0;
            for (k, p) in probs.iter().enumerate() {
                let x3 = 2.0;
                let dx3 = if k == 2 { 2.0 } else { 0.0 };
                e += p * dx3 * x3 * x3 * x3;
            }
            Ok(e)
        }
        CouplingModel::Poisson => {
            let a = raw_moments(|m| pois(l2, m));
            let b = raw_moments(|m| pois(l3 - l2, m));
            Ok(mix(&a, &b))
        }
        CouplingModel::Geometric => {
            let geo = |l: f64, m: u64| (l / (1.0 + l)).powf(m as f64) / (1.0 + l);
            let gate = (l3 - l2) / (1.0 + l3);
            let a = raw_moments(|m| geo(l2, m));
            let b = raw_moments(|m| if m == 0 { 1.0 - gate } else { gate * geo(l3, m - 1) });
            Ok(mix(&a, &b))
        }
        CouplingModel::Tabular(_) => Err(Error::capability("direct identity evaluation needs a built-in coupling")),
    }
}

fn pois(mu: f64, m: u64) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    (m as f64 * mu.ln() - mu - statrs::function::factorial::ln_factorial(m)).exp()
}

/// `E[B(A + B)³]` for independent `A`, `B` from their raw moments.
fn mix(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a[3] * b[1] + 3.0 * a[2] * b[2] + 3.0 * a[1] * b[3] + b[4]
}

fn to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

struct Fit {
    name: &'static str,
    c: f64,
    worst: [f64; 3],
    index: Option<[usize; 3]>,
}

impl Fit {
    fn new(name: &'static str) -> Self {
        Fit { name, c: 0.0, worst: [f64::NAN; 3], index: None }
    }

    fn push(&mut self, value: f64, scale: f64, t: [f64; 3], index: Option<[usize; 3]>) {
        let r = if value <= 0.0 {
            0.0
        } else if scale <= 0.0 {
            f64::INFINITY
        } else {
            value / scale
        };
        if r > self.c || self.worst[0].is_nan() {
            self.c = self.c.max(r);
            self.worst = t;
            self.index = index;
        }
    }

    fn finish(self) -> HMomFamily {
        HMomFamily {
            name: self.name.to_string(),
            constant: self.c,
            worst_triple: self.worst,
            worst_index: self.index,
            passed: self.c.is_finite(),
        }
    }
}

/// Samples ordered triples in `[a, b]` and fits the constants of the moment
/// hypotheses and of their simplified form. The degenerate triple
/// `λ₁ = λ₂ = λ₃ = a` is always included.
pub fn check_hmom(model: &CouplingModel, a: f64, b: f64, kappa: f64, triples: usize, seed: u64) -> Result<HMomCertificate> {
    let kind = model.kind();
    if kind == Kind::Tabular {
        return Err(Error::capability("tabular couplings are tied to one grid; random triples cannot be evaluated"));
    }
    if !(kappa > 0.5 && kappa < 1.0) {
        return Err(Error::domain(format!("κ = {kappa} outside (1/2, 1)")));
    }
    if !(a < b) || !model.interval().contains_range(a, b) {
        return Err(Error::domain(format!("[{a}, {b}] is not inside {}", model.interval())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list = vec![[a, a, a]];
    for _ in 0..triples {
        let mut t = [rng.random_range(a..=b), rng.random_range(a..=b), rng.random_range(a..=b)];
        t.sort_by(f64::total_cmp);
        list.push(t);
    }
    let indices: Vec<[usize; 3]> = multi_indices(3, 4)
        .into_iter()
        .filter(|v| v.iter().sum::<usize>() >= 1 && (v[1] >= 1 || v[2] >= 1))
        .map(|v| [v[0], v[1], v[2]])
        .collect();
    let (mut f1, mut f2, mut e1, mut e2) = (Fit::new("dsdity"), Fit::new("dsdity2"), Fit::new("easy1"), Fit::new("easy2"));
    let mut linear = BigRational::zero();
    let mut id_err = 0.0f64;
    for t in &list {
        let w13 = t[2] - t[0];
        let w23 = t[2] - t[1];
        for b in &indices {
            f1.push(builtin_factorial_moment(kind, t, b), w13.powf(kappa), *t, Some(*b));
        }
        let mut cross = 0.0;
        for y in 1..=2 {
            for z in 1..=2 {
                let v = builtin_factorial_moment(kind, t, &[0, y, z]);
                f2.push(v, w13.powf(2.0 * kappa), *t, Some([0, y, z]));
                cross += v;
            }
        }
        e1.push(cross, w13.powf(2.0 * kappa), *t, None);
        let ident = identity_from_factorial_moments(kind, t);
        e2.push(ident, w23.powf(kappa), *t, None);
        if w23 > 0.0 {
            let exact = [to_rational(t[0]), to_rational(t[1]), to_rational(t[2])];
            let ratio = identity_exact(kind, &exact) / (exact[2].clone() - exact[1].clone());
            if ratio > linear {
                linear = ratio;
            }
        }
        let direct = identity_direct(model, t)?;
        let rel = if ident == direct { 0.0 } else { (ident - direct).abs() / direct.abs().max(ident.abs()) };
        id_err = id_err.max(rel);
    }
    let (dsdity, dsdity2, easy1, easy2) = (f1.finish(), f2.finish(), e1.finish(), e2.finish());
    let identity_passed = id_err <= IDENTITY_TOL;
    let passed = dsdity.passed && dsdity2.passed && easy1.passed && easy2.passed && identity_passed;
    Ok(HMomCertificate {
        model: format!("{kind:?}").to_lowercase(),
        interval: [a, b],
        kappa,
        triples: list.len(),
        seed,
        dsdity,
        dsdity2,
        easy1,
        easy2,
        easy2_linear: linear.to_f64().unwrap_or(f64::NAN),
        identity_max_rel_error: id_err,
        identity_passed,
        passed,
    })
}

impl Report for HMomCertificate {
    fn passed(&self) -> bool {
        self.passed
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "family,constant,lambda1,lambda2,lambda3,index,passed")?;
        for f in [&self.dsdity, &self.dsdity2, &self.easy1, &self.easy2] {
            let idx = f.worst_index.map(|b| format!("{}{}{}", b[0], b[1], b[2])).unwrap_or_default();
            let [l1, l2, l3] = f.worst_triple;
            writeln!(out, "{},{},{l1},{l2},{l3},{idx},{}", f.name, f.constant, f.passed)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matches_direct_evaluation() {
        for model in CouplingModel::builtins() {
            for t in [[1.2, 1.5, 1.9], [1.1, 1.1, 1.8], [1.3, 1.7, 1.7]] {
                let a = identity_from_factorial_moments(model.kind(), &t);
                let b = identity_direct(&model, &t).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300), "{model:?} {t:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn quoted_closed_forms() {
        let t = [1.2, 1.5, 1.9];
        let d3 = t[2] - t[1];
        let p = identity_from_factorial_moments(Kind::Poisson, &t);
        let l3 = t[2];
        assert!((p - (l3.powi(3) + 6.0 * l3 * l3 + 7.0 * l3 + 1.0) * d3).abs() < 1e-12);
        let g = identity_from_factorial_moments(Kind::Geometric, &t);
        let l2 = t[1];
        let q = 24.0 * l3.powi(3) + 18.0 * (l2 + 2.0) * l3 * l3 + 2.0 * (6.0 * l2 * l2 + 12.0 * l2 + 7.0) * l3
            + 6.0 * l2.powi(3)
            + 12.0 * l2 * l2
            + 7.0 * l2
            + 1.0;
        assert!((g - q * d3).abs() < 1e-11 * g);
        assert!((identity_from_factorial_moments(Kind::Binary, &t) - 8.0 * d3).abs() < 1e-14);
    }

    #[test]
    fn binary_certificate() {
        let c = check_hmom(&CouplingModel::Binary, 1.1, 1.9, 0.9, 200, 3).unwrap();
        assert!(c.passed);
        assert_eq!(c.easy1.constant, 0.0);
        assert_eq!(c.easy2_linear, 8.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(check_hmom(&CouplingModel::Binary, 1.1, 2.5, 0.9, 10, 0).is_err());
        assert!(check_hmom(&CouplingModel::Poisson, 1.1, 2.5, 0.4, 10, 0).is_err());
    }
}
