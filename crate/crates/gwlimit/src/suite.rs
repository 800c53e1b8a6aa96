//! The verification suite: ten reproducible checks of the exact formulas,
//! oracles and statistical properties, each with a pass/fail verdict.
//!
//! Every random choice is drawn from a fixed seed, and Monte Carlo work uses
//! per-replicate streams, so a report is independent of the thread count.

use std::io::Write;
use std::time::Instant;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::{CouplingModel, Kind, TimeGrid};
use crate::diagnostics::{
    brute_force_s_product, check_hmom, identity_direct, identity_from_factorial_moments, kesten_stigum_check,
    random_tabular, tightness_scan, wasserstein_contraction_test, ContractionConfig, MomentAssignment, TightnessConfig,
};
use crate::error::Result;
use crate::fixedpoint::{conditioned_moments, extinction_probability, iterate_transform, LatticeSpec, TransformConfig};
use crate::forest::{simulate_paths, SimConfig};
use crate::partition::{expand_s_product, moment_system, moment_system_exact, solve_moments, Atom, Horizon, Monomial};
use crate::stats::{batch_mean, ks_test, Estimate};

/// Population cap for the long Monte Carlo runs.
pub const LONG_RUN_CAP: u64 = 1_000_000_000_000_000;

const SE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteSize {
    Quick,
    Full,
}

impl SuiteSize {
    fn pick<T>(self, quick: T, full: T) -> T {
        match self {
            SuiteSize::Quick => quick,
            SuiteSize::Full => full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ limit`.
    AtMost,
    /// `value ≥ limit`.
    AtLeast,
    /// `value == limit` exactly.
    Equal,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn new(label: impl Into<String>, value: f64, relation: Relation, limit: f64) -> Self {
        let passed = match relation {
            Relation::AtMost => value <= limit,
            Relation::AtLeast => value >= limit,
            Relation::Equal => value == limit,
            Relation::Info => true,
        };
        Check { label: label.into(), value, relation, limit, passed }
    }

    fn at_most(label: impl Into<String>, value: f64, limit: f64) -> Self {
        Check::new(label, value, Relation::AtMost, limit)
    }

    fn at_least(label: impl Into<String>, value: f64, limit: f64) -> Self {
        Check::new(label, value, Relation::AtLeast, limit)
    }

    fn z(label: impl Into<String>, est: Estimate, target: f64) -> Self {
        Check::at_most(label, est.z(target), SE)
    }

    fn flag(label: impl Into<String>, ok: bool) -> Self {
        Check::new(label, if ok { 1.0 } else { 0.0 }, Relation::Equal, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub title: String,
    /// Wall-clock budget in seconds for the full-size run.
    pub budget_seconds: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Wall-clock time; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionResult {
    /// One-line verdict.
    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.label.as_str()).collect();
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("[{verdict}] {:>2}. {} ({} checks, {:.1}s)", self.id, self.title, self.checks.len(), self.seconds);
        if !failed.is_empty() {
            s.push_str(&format!("; failing: {}", failed.join("; ")));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub version: String,
    pub size: SuiteSize,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "criterion,label,value,relation,limit,passed")?;
        for c in &self.criteria {
            for k in &c.checks {
                let rel = match k.relation {
                    Relation::AtMost => "at_most",
                    Relation::AtLeast => "at_least",
                    Relation::Equal => "equal",
                    Relation::Info => "info",
                };
                writeln!(out, "{},\"{}\",{},{rel},{},{}", c.id, k.label, k.value, k.limit, k.passed)?;
            }
        }
        Ok(())
    }
}

/// Titles and full-size budgets (seconds) of the criteria, in order.
pub const CRITERIA: [(&str, f64); 10] = [
    ("closed-form second-moment limits", 10.0),
    ("partition expansion against enumeration", 30.0),
    ("factorial-moment identity", 5.0),
    ("extinction probabilities", 5.0),
    ("geometric marginal law", 60.0),
    ("conditioned moments", 300.0),
    ("transform fixed point", 60.0),
    ("moment hypothesis certificates", 10.0),
    ("tightness exponent", 60.0),
    ("Wasserstein contraction", 120.0),
];

pub fn run_suite(size: SuiteSize) -> Result<SuiteReport> {
    let criteria = (1..=CRITERIA.len()).map(|id| run_criterion(id, size)).collect::<Result<Vec<_>>>()?;
    let passed = criteria.iter().all(|c| c.passed);
    Ok(SuiteReport { version: crate::VERSION.to_string(), size, criteria, passed })
}

pub fn run_criterion(id: usize, size: SuiteSize) -> Result<CriterionResult> {
    let start = Instant::now();
    let checks = match id {
        1 => closed_form_limits(size)?,
        2 => expansion_oracle(size)?,
        3 => factorial_identity(size)?,
        4 => extinction(size)?,
        5 => geometric_marginal(size)?,
        6 => conditioned(size)?,
        7 => transform(size)?,
        8 => hmom(size)?,
        9 => tightness(size)?,
        10 => contraction(size)?,
        _ => return Err(crate::Error::domain(format!("no criterion {id}"))),
    };
    let (title, budget) = CRITERIA[id - 1];
    Ok(CriterionResult {
        id,
        title: title.to_string(),
        budget_seconds: budget,
        passed: checks.iter().all(|c| c.passed),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn rng_for(id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x6777_6c69_6d69_7400 + id)
}

/// A compact inside each coupling's interval.
fn compact(model: &CouplingModel) -> (f64, f64) {
    match model.kind() {
        Kind::Binary => (1.1, 2.0),
        _ => (1.1, 4.0),
    }
}

fn rel_err(x: f64, y: f64) -> f64 {
    if x == y {
        0.0
    } else {
        (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)
    }
}

/// Distinct sorted values `k/1000` drawn from `[a, b]`.
fn rational_grid<R: Rng>(rng: &mut R, d: usize, a: f64, b: f64) -> Vec<BigRational> {
    let (lo, hi) = ((a * 1000.0).round() as i64, (b * 1000.0).round() as i64);
    let mut ks: Vec<i64> = Vec::with_capacity(d);
    while ks.len() < d {
        let k = rng.random_range(lo..=hi);
        if !ks.contains(&k) {
            ks.push(k);
        }
    }
    ks.sort_unstable();
    ks.into_iter().map(|k| BigRational::new(BigInt::from(k), BigInt::from(1000))).collect()
}

fn to_f64s(lams: &[BigRational]) -> Vec<f64> {
    use crate::scalar::Scalar;
    lams.iter().map(Scalar::to_f64).collect()
}

fn closed_form_limits(size: SuiteSize) -> Result<Vec<Check>> {
    use crate::scalar::Scalar;
    let pairs = size.pick(20, 100);
    let mut rng = rng_for(1);
    let mut checks = Vec::new();
    for model in CouplingModel::builtins() {
        let (a, b) = compact(&model);
        let (mut exact_mismatch, mut worst) = (0usize, 0.0f64);
        for _ in 0..pairs {
            let lams = rational_grid(&mut rng, 2, a, b);
            let fac = |beta: &[usize]| model.factorial_moment_exact(&lams, beta);
            let (f20, f11, f02) = (fac(&[2, 0])?, fac(&[1, 1])?, fac(&[0, 2])?);
            let one = BigRational::from_u64(1);
            let (l1, l2) = (lams[0].clone(), lams[1].clone());
            let two = BigRational::from_u64(2);
            let expected = [
                ("W1:2", f20.clone() / (l1.clone() * (l1.clone() - one.clone()))),
                ("W1:1,W2:1", (f11.clone() + f20.clone()) / (l1.clone() * (l2.clone() - one.clone()))),
                ("W2:2", (f02 + two * f11 + f20) / (l2.clone() * (l2 - one))),
            ];
            let grid = TimeGrid::new(to_f64s(&lams))?;
            for (target, value) in expected {
                let m = Monomial::parse(target, 2)?;
                let exact = solve_moments(&moment_system_exact(&model, &lams, &m)?, Horizon::Limit)?.value;
                if exact != value {
                    exact_mismatch += 1;
                }
                let float = solve_moments(&moment_system(&model, &grid, &m)?, Horizon::Limit)?.value;
                worst = worst.max(rel_err(float, value.to_f64()));
            }
        }
        checks.push(Check::new(format!("{}: exact limits differing from the closed forms", model.kind()), exact_mismatch as f64, Relation::Equal, 0.0));
        checks.push(Check::at_most(format!("{}: max relative error, double precision", model.kind()), worst, 1e-12));
    }
    Ok(checks)
}

fn random_layout<R: Rng>(rng: &mut R) -> Vec<Vec<Atom>> {
    let pool = [Atom::W(1), Atom::W(2), Atom::D(2)];
    let total = rng.random_range(1..=4);
    let mut blocks = vec![Vec::new(), Vec::new()];
    for _ in 0..total {
        let a = pool[rng.random_range(0..pool.len())];
        blocks[rng.random_range(0..2)].push(a);
    }
    blocks
}

fn expansion_oracle(size: SuiteSize) -> Result<Vec<Check>> {
    let couplings = size.pick(20, 50);
    let layouts = 10;
    let mut rng = rng_for(2);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for _ in 0..couplings {
        let t = random_tabular(2, 3, 3, &mut rng);
        let facs = CouplingModel::Tabular(t.clone()).factorial_table(&t.grid, 4)?;
        let moments = MomentAssignment::random(2, 4, &mut rng);
        for _ in 0..layouts {
            let blocks = random_layout(&mut rng);
            let terms = expand_s_product(&blocks, &facs)?;
            let fast = moments.evaluate(&terms)?;
            let slow = brute_force_s_product(&t.outcomes, &blocks, &moments)?;
            worst = worst.max((fast - slow).abs() / slow.abs().max(1.0));
            compared += 1;
        }
    }
    Ok(vec![
        Check::new("layouts compared", compared as f64, Relation::Info, 0.0),
        Check::at_most("max relative gap between expansion and enumeration", worst, 1e-12),
    ])
}

fn factorial_identity(size: SuiteSize) -> Result<Vec<Check>> {
    let grids = size.pick(30, 100);
    let mut rng = rng_for(3);
    let mut checks = Vec::new();
    for model in CouplingModel::builtins() {
        let (a, b) = compact(&model);
        let mut worst = 0.0f64;
        for _ in 0..grids {
            let mut l: Vec<f64> = (0..3).map(|_| rng.random_range(a..b)).collect();
            l.sort_by(f64::total_cmp);
            let lams = [l[0], l[1], l[2]];
            let fac = identity_from_factorial_moments(model.kind(), &lams);
            let direct = identity_direct(&model, &lams)?;
            worst = worst.max(rel_err(fac, direct));
        }
        checks.push(Check::at_most(format!("{}: max relative error", model.kind()), worst, 1e-9));
    }
    Ok(checks)
}

fn extinction(size: SuiteSize) -> Result<Vec<Check>> {
    let count = size.pick(20, 50);
    let tol = 1e-14;
    let mut rng = rng_for(4);
    let mut worst = [0.0f64; 3];
    for _ in 0..count {
        let l = rng.random_range(1.01..=2.0);
        worst[0] = worst[0].max((extinction_probability(&CouplingModel::Binary, l, tol)? - (2.0 - l) / l).abs());
        let l = rng.random_range(1.01..6.0);
        worst[1] = worst[1].max((extinction_probability(&CouplingModel::Geometric, l, tol)? - 1.0 / l).abs());
        let q: f64 = rng.random_range(0.01..0.95);
        let l = q.ln() / (q - 1.0);
        worst[2] = worst[2].max((extinction_probability(&CouplingModel::Poisson, l, tol)? - q).abs());
    }
    Ok(vec![
        Check::at_most("binary: max |q − (2−λ)/λ|", worst[0], 1e-10),
        Check::at_most("geometric: max |q − 1/λ|", worst[1], 1e-10),
        Check::at_most("poisson: max round-trip |q̂ − q|", worst[2], 1e-8),
    ])
}

/// Horizon keeping `λ^N` three decades below the cap, at most 40.
pub fn long_run_generations(lambda: f64, cap: u64) -> usize {
    (((cap as f64 / 1e3).ln() / lambda.ln()).floor() as usize).clamp(1, 40)
}

fn geometric_marginal(size: SuiteSize) -> Result<Vec<Check>> {
    let reps = size.pick(20_000, 100_000);
    let n = 25;
    let grid = TimeGrid::single(2.0)?;
    let model = CouplingModel::Geometric;
    let ens = simulate_paths(&model, &grid, &SimConfig::new(n, reps, 5).cap(LONG_RUN_CAP).last_only())?;
    let extinct = ens.extinct_fraction(n, 0)?;
    let survivors: Vec<f64> = ens.clean_replicates().map(|r| ens.w(r, n, 0)).collect::<Result<Vec<_>>>()?;
    let survivors: Vec<f64> = survivors.into_iter().filter(|&w| w > 0.0).collect();
    let ks = ks_test(&survivors, |x| 1.0 - (-x / 2.0).exp());
    let ksr = kesten_stigum_check(&ens, &model)?;
    Ok(vec![
        Check::z("extinct fraction vs 1/2 (z)", extinct, 0.5),
        Check::at_least("KS p-value of survivors against Expo(1/2)", ks.p_value, 1e-3),
        Check::z("conditioned mean vs 2 (z)", ksr.points[0].conditioned_mean, 2.0),
        Check::z("mean of W_N vs 1 (z)", ksr.points[0].mean_w, 1.0),
        Check::new("overflowed replicates", ens.overflow_count() as f64, Relation::Info, 0.0),
    ])
}

/// `(mean, variance)` of the survivors with a batch-means SE on the variance.
fn survivor_variance(w: &[f64]) -> Estimate {
    let s: Vec<f64> = w.iter().copied().filter(|&x| x > 0.0).collect();
    let m = s.iter().sum::<f64>() / s.len() as f64;
    let sq: Vec<f64> = s.iter().map(|x| (x - m).powi(2)).collect();
    batch_mean(&sq)
}

fn conditioned(size: SuiteSize) -> Result<Vec<Check>> {
    let tol = 1e-14;
    let mut checks = Vec::new();
    let binary_mean = |l: f64| l / (2.0 * (l - 1.0));
    let binary_var_stated = |l: f64| l * (2.0 - l) / (4.0 * (l - 1.0));
    let binary_var = |l: f64| l * (2.0 - l) / (4.0 * (l - 1.0).powi(2));
    let poisson_m2 = |l: f64, q: f64| l / ((1.0 - q) * (l - 1.0));
    let poisson_m3 = |l: f64, q: f64| l * l * (l + 2.0) / ((l + 1.0) * (l - 1.0).powi(2) * (1.0 - q));

    let (mut e_mean, mut e_stated, mut e_var, mut e_p2, mut e_p3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &l in &[1.2, 1.4, 1.5, 1.7, 1.9] {
        let q = extinction_probability(&CouplingModel::Binary, l, tol)?;
        let mu = conditioned_moments(&CouplingModel::Binary, l, q, 2)?;
        let var = mu[2] - mu[1] * mu[1];
        e_mean = e_mean.max(rel_err(mu[1], binary_mean(l)));
        e_stated = e_stated.max(rel_err(var, binary_var_stated(l)));
        e_var = e_var.max(rel_err(var, binary_var(l)));
    }
    for &l in &[1.5, 2.0, 2.5, 3.0] {
        let q = extinction_probability(&CouplingModel::Poisson, l, tol)?;
        let mu = conditioned_moments(&CouplingModel::Poisson, l, q, 3)?;
        e_p2 = e_p2.max(rel_err(mu[2], poisson_m2(l, q)));
        e_p3 = e_p3.max(rel_err(mu[3], poisson_m3(l, q)));
    }
    checks.push(Check::at_most("binary mean λ/(2(λ−1)): max relative error", e_mean, 1e-8));
    checks.push(Check::at_most("binary variance λ(2−λ)/(4(λ−1)) as stated: max relative error", e_stated, 1e-8));
    checks.push(Check::at_most("binary variance λ(2−λ)/(4(λ−1)²) from the moment list: max relative error", e_var, 1e-8));
    checks.push(Check::at_most("poisson second moment: max relative error", e_p2, 1e-8));
    checks.push(Check::at_most("poisson third moment: max relative error", e_p3, 1e-8));

    let reps = size.pick(100_000, 1_000_000);
    for (model, l, seed) in [(CouplingModel::Binary, 1.5, 61), (CouplingModel::Poisson, 2.0, 62)] {
        let n = long_run_generations(l, LONG_RUN_CAP);
        let grid = TimeGrid::single(l)?;
        let ens = simulate_paths(&model, &grid, &SimConfig::new(n, reps, seed).cap(LONG_RUN_CAP).last_only())?;
        let ksr = kesten_stigum_check(&ens, &model)?;
        let p = &ksr.points[0];
        let kind = model.kind();
        checks.push(Check::z(format!("{kind} λ={l}: mean of W_N vs 1 (z)"), p.mean_w, 1.0));
        checks.push(Check::z(format!("{kind} λ={l}: extinct fraction vs q (z)"), p.extinct_fraction, p.q));
        checks.push(Check::z(format!("{kind} λ={l}: conditioned mean vs 1/(1−q) (z)"), p.conditioned_mean, 1.0 / (1.0 - p.q)));
        match kind {
            Kind::Binary => {
                let w = ens.column(n, 0)?;
                let v = survivor_variance(&w);
                checks.push(Check::z(format!("binary λ={l}: conditioned variance vs stated form (z)"), v, binary_var_stated(l)));
                checks.push(Check::z(format!("binary λ={l}: conditioned variance vs moment-list form (z)"), v, binary_var(l)));
            }
            _ => {
                let (m2, m3) = (&p.conditioned_moments[0], &p.conditioned_moments[1]);
                checks.push(Check::z(format!("poisson λ={l}: conditioned second moment (z)"), m2.estimate, poisson_m2(l, p.q)));
                checks.push(Check::z(format!("poisson λ={l}: conditioned third moment (z)"), m3.estimate, poisson_m3(l, p.q)));
            }
        }
        checks.push(Check::new(format!("{kind} λ={l}: overflowed replicates"), ens.overflow_count() as f64, Relation::Info, 0.0));
    }
    Ok(checks)
}

fn geometric_transform(x: f64, l: f64) -> Complex64 {
    let i = Complex64::i();
    (1.0 - l + i * x) / (1.0 - l + i * x * l)
}

fn transform(size: SuiteSize) -> Result<Vec<Check>> {
    let model = CouplingModel::Geometric;
    let n = 100;
    let hw = 20.0;
    let mut checks = Vec::new();

    let grid = TimeGrid::single(2.0)?;
    let cfg = TransformConfig::new(n).lattice(LatticeSpec::self_similar(hw));
    let one = iterate_transform(&model, &grid, &cfg)?;
    let err = one.sup_error(|x| geometric_transform(x[0], 2.0));
    checks.push(Check::at_most("geometric λ=2: sup error on the self-similar lattice", err, 1e-5));
    checks.push(Check::at_most("geometric λ=2: residual of one more sweep", one.residual, 1e-5));

    let uniform = TransformConfig::new(n).lattice(LatticeSpec::uniform(hw, 0.01)).refine(false);
    let u = iterate_transform(&model, &grid, &uniform)?;
    checks.push(Check::new("geometric λ=2: sup error on the uniform lattice, step 0.01", u.sup_error(|x| geometric_transform(x[0], 2.0)), Relation::Info, 0.0));

    let (l1, l2) = (1.5, 2.0);
    let two = TransformConfig::new(n).lattice(LatticeSpec::self_similar(hw)).refine(size == SuiteSize::Full);
    let joint = iterate_transform(&model, &TimeGrid::new(vec![l1, l2])?, &two)?;
    let single = iterate_transform(&model, &grid, &TransformConfig::new(n).lattice(LatticeSpec::self_similar(hw)).refine(false))?;
    let axis = single.lattice.axis(0).to_vec();
    let mut gap = 0.0f64;
    for (k, &x2) in axis.iter().enumerate() {
        gap = gap.max((joint.at(&[0.0, x2])? - single.values[k]).norm());
    }
    // Both runs are exact on the lattice up to the drift of the mean mode in
    // the innermost cell, at most one cell width per sweep.
    let tolerance = n as f64 * 1e-9;
    checks.push(Check::at_most("Φ(0, x₂) against the one-point transform at λ₂", gap, tolerance));
    checks.push(Check::at_most("two-point transform: max modulus", joint.max_modulus(), 1.0 + 1e-12));
    Ok(checks)
}

fn hmom(size: SuiteSize) -> Result<Vec<Check>> {
    let triples = size.pick(100, 400);
    let mut checks = Vec::new();
    for (model, a, b) in [(CouplingModel::Binary, 1.1, 1.9), (CouplingModel::Geometric, 1.2, 3.0), (CouplingModel::Poisson, 1.2, 3.0)] {
        let cert = check_hmom(&model, a, b, 0.9, triples, 8)?;
        let kind = model.kind();
        checks.push(Check::flag(format!("{kind} on [{a}, {b}]: certificate"), cert.passed));
        if kind == Kind::Binary {
            checks.push(Check::new("binary: constant of E[ΔX(λ₂)²ΔX(λ₃)²]", cert.easy1.constant, Relation::Equal, 0.0));
            checks.push(Check::new("binary: sup E[ΔX(λ₃)X(λ₃)³]/Δλ₃", cert.easy2_linear, Relation::Equal, 8.0));
        }
    }
    Ok(checks)
}

fn tightness(size: SuiteSize) -> Result<Vec<Check>> {
    let mut cfg = TightnessConfig::new(1.5, 3.0, 0.9);
    cfg.replicates = size.pick(20_000, 100_000);
    let r = tightness_scan(&CouplingModel::Poisson, &cfg)?;
    let mut checks = vec![
        Check::at_least("log-log slope of sup_n E[ΔW(λ₂)²ΔW(λ₃)²]", r.slope, 2.0 * cfg.kappa),
        Check::at_most("self-coefficient vs λ₁/(λ₂λ₃)²: max relative error", r.self_coefficient_max_rel_error, 1e-12),
        Check::flag("initial value zero", r.initial_value_zero),
    ];
    if let Some(z) = r.mc_z {
        checks.push(Check::at_most("Monte Carlo cross-check (z)", z, SE));
    }
    checks.push(Check::new("fitted C_W", r.c_w, Relation::Info, 0.0));
    Ok(checks)
}

fn contraction(size: SuiteSize) -> Result<Vec<Check>> {
    let sample = size.pick(10_000, 100_000);
    let mut checks = Vec::new();
    let cases = [
        (CouplingModel::Binary, [1.2, 1.5, 1.8]),
        (CouplingModel::Geometric, [1.5, 2.0, 3.0]),
        (CouplingModel::Poisson, [1.5, 2.0, 3.0]),
    ];
    let mut seed = 100;
    for (model, lams) in cases {
        for l in lams {
            seed += 1;
            let r = wasserstein_contraction_test(&model, &TimeGrid::single(l)?, &ContractionConfig::new(sample, seed))?;
            let ratio = r.ratio_sorted.unwrap_or(r.ratio_paired);
            let label = format!("{} λ={l}: ratio {:.4} ± {:.4} against 1/λ₁ + 4 SE", model.kind(), ratio.mean, ratio.se);
            checks.push(Check::at_most(label, ratio.mean, r.bound + SE * ratio.se));
        }
    }
    Ok(checks)
}
