use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{CouplingModel, Outcome, TimeGrid};
use crate::error::{Error, Result};

pub const MAX_TRANSFORM_DIM: usize = 3;

/// Upper bound on lattice size.
const MAX_POINTS: usize = 40_000_000;

/// How the argument lattice is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeSpec {
    /// `[−h, h]` at constant step on every axis.
    Uniform { half_width: f64, step: f64 },
    /// `{0} ∪ {±h·λ_j^{−k/s}}` down to `inner` on axis `j`. The maps
    /// `x_j ↦ x_j/λ_j` send this lattice into itself, so the recursion only
    /// interpolates inside the innermost cell.
    SelfSimilar { half_width: f64, per_factor: usize, inner: f64 },
}

impl LatticeSpec {
    pub fn uniform(half_width: f64, step: f64) -> Self {
        LatticeSpec::Uniform { half_width, step }
    }

    pub fn self_similar(half_width: f64) -> Self {
        LatticeSpec::SelfSimilar { half_width, per_factor: 4, inner: 1e-9 }
    }

    /// The same layout at twice the resolution.
    pub fn refined(&self) -> Self {
        match *self {
            LatticeSpec::Uniform { half_width, step } => LatticeSpec::Uniform { half_width, step: step / 2.0 },
            LatticeSpec::SelfSimilar { half_width, per_factor, inner } => {
                LatticeSpec::SelfSimilar { half_width, per_factor: 2 * per_factor, inner }
            }
        }
    }

    pub fn half_width(&self) -> f64 {
        match *self {
            LatticeSpec::Uniform { half_width, .. } | LatticeSpec::SelfSimilar { half_width, .. } => half_width,
        }
    }
}

/// Tensor lattice symmetric about the origin, with the origin on every axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl Lattice {
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        let d = axes.len();
        if d == 0 || d > MAX_TRANSFORM_DIM {
            return Err(Error::capability(format!("transform iteration supports 1 ≤ d ≤ {MAX_TRANSFORM_DIM}")));
        }
        for a in &axes {
            if a.len() < 3 || a.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::domain("lattice axes need at least 3 strictly increasing points"));
            }
            let m = a.len();
            if (0..m).any(|k| (a[k] + a[m - 1 - k]).abs() > 1e-12 * a[m - 1]) || !a.contains(&0.0) {
                return Err(Error::domain("lattice axes must be symmetric about and contain 0"));
            }
        }
        let len = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len())).unwrap_or(usize::MAX);
        if len > MAX_POINTS {
            return Err(Error::capability(format!("lattice of {len} points is too large")));
        }
        let mut strides = vec![1; d];
        for j in (0..d - 1).rev() {
            strides[j] = strides[j + 1] * axes[j + 1].len();
        }
        Ok(Lattice { axes, strides })
    }

    pub fn new(spec: &LatticeSpec, lambdas: &[f64]) -> Result<Self> {
        let d = lambdas.len();
        if d == 0 || d > MAX_TRANSFORM_DIM {
            return Err(Error::capability(format!("transform iteration supports 1 ≤ d ≤ {MAX_TRANSFORM_DIM}")));
        }
        let axes = match *spec {
            LatticeSpec::Uniform { half_width, step } => {
                if !(half_width > 0.0 && step > 0.0 && step <= half_width) {
                    return Err(Error::domain("lattice needs 0 < step ≤ half-width"));
                }
                let half = (half_width / step).round() as usize;
                if half.checked_pow(d as u32).map_or(true, |n| n > MAX_POINTS) {
                    return Err(Error::capability("uniform lattice is too large"));
                }
                let axis: Vec<f64> = (0..=2 * half).map(|k| (k as f64 - half as f64) * half_width / half as f64).collect();
                vec![axis; d]
            }
            LatticeSpec::SelfSimilar { half_width, per_factor, inner } => {
                if !(half_width > 0.0 && inner > 0.0 && inner < half_width && per_factor >= 1) {
                    return Err(Error::domain("self-similar lattice needs 0 < inner < half-width and per_factor ≥ 1"));
                }
                let mut axes = Vec::with_capacity(d);
                for &l in lambdas {
                    let decay = l.ln() / per_factor as f64;
                    let count = ((half_width / inner).ln() / decay).ceil() as usize + 1;
                    if count.checked_pow(d as u32).map_or(true, |n| n > MAX_POINTS) {
                        return Err(Error::capability("self-similar lattice is too large; raise `inner`"));
                    }
                    let pos: Vec<f64> = (0..count).map(|k| half_width * (-(k as f64) * decay).exp()).collect();
                    let mut axis: Vec<f64> = pos.iter().map(|v| -v).collect();
                    axis.push(0.0);
                    axis.extend(pos.iter().rev());
                    axes.push(axis);
                }
                axes
            }
        };
        Lattice::from_axes(axes)
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, j: usize) -> &[f64] {
        &self.axes[j]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half_width(&self) -> f64 {
        self.axes.iter().map(|a| a[a.len() - 1]).fold(f64::INFINITY, f64::min)
    }

    /// Per-axis indices of a flat index; axis 0 varies slowest.
    pub fn unflatten(&self, idx: usize) -> Vec<usize> {
        self.strides.iter().zip(&self.axes).map(|(&s, a)| (idx / s) % a.len()).collect()
    }

    pub fn flatten(&self, ks: &[usize]) -> usize {
        ks.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx).iter().zip(&self.axes).map(|(&k, a)| a[k]).collect()
    }

    /// Index of the mirrored point `−x`.
    pub fn mirror(&self, idx: usize) -> usize {
        let ks: Vec<usize> = self.unflatten(idx).iter().zip(&self.axes).map(|(&k, a)| a.len() - 1 - k).collect();
        self.flatten(&ks)
    }

    /// Lower cell index and weight of the upper neighbour for one coordinate.
    fn locate(&self, j: usize, v: f64) -> (usize, f64) {
        let a = &self.axes[j];
        let m = a.len();
        let v = v.clamp(a[0], a[m - 1]);
        let i0 = a.partition_point(|&c| c <= v).saturating_sub(1).min(m - 2);
        let t = ((v - a[i0]) / (a[i0 + 1] - a[i0])).clamp(0.0, 1.0);
        (i0, t)
    }

    /// Multilinear interpolation of lattice values at a cell description.
    fn interpolate(&self, values: &[Complex64], cell: &[(usize, f64)]) -> Complex64 {
        let d = self.d();
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for (j, &(i0, t)) in cell.iter().enumerate() {
                let up = (corner >> (d - 1 - j)) & 1 == 1;
                w *= if up { t } else { 1.0 - t };
                idx += (i0 + up as usize) * self.strides[j];
            }
            if w != 0.0 {
                acc += values[idx] * w;
            }
        }
        acc
    }

    /// Flat index of a point of `self` inside `other`, if present.
    fn embed(&self, idx: usize, other: &Lattice) -> Option<usize> {
        let x = self.point(idx);
        let mut ks = Vec::with_capacity(x.len());
        for (j, v) in x.iter().enumerate() {
            let a = &other.axes[j];
            let k = a.partition_point(|&c| c < *v);
            let hit = [k.wrapping_sub(1), k].into_iter().find(|&i| i < a.len() && (a[i] - v).abs() <= 1e-12 * (1.0 + v.abs()));
            ks.push(hit?);
        }
        Some(other.flatten(&ks))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformConfig {
    pub lattice: LatticeSpec,
    pub iterations: usize,
    /// Repeat on the lattice at twice the resolution and compare.
    pub refine: bool,
    /// Largest tolerated refinement disagreement.
    pub refine_tolerance: f64,
}

impl TransformConfig {
    /// `[−20, 20]^d` at step 0.05 with one refinement pass.
    pub fn new(iterations: usize) -> Self {
        TransformConfig { lattice: LatticeSpec::uniform(20.0, 0.05), iterations, refine: true, refine_tolerance: 5e-3 }
    }

    pub fn lattice(mut self, spec: LatticeSpec) -> Self {
        self.lattice = spec;
        self
    }

    pub fn refine(mut self, on: bool) -> Self {
        self.refine = on;
        self
    }
}

/// `Φ^{(n)}_{λ[1..d]}` sampled on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformGrid {
    pub lambdas: Vec<f64>,
    pub spec: LatticeSpec,
    pub lattice: Lattice,
    pub iterations: usize,
    pub values: Vec<Complex64>,
    /// Sup over the coarse lattice of `|Φ_h − Φ_{h/2}|`.
    pub refinement_error: Option<f64>,
    /// Sup over the lattice of `|Φ^{(n+1)} − Φ^{(n)}|`.
    pub residual: f64,
}

impl TransformGrid {
    /// Interpolated value at an arbitrary argument inside the lattice.
    pub fn at(&self, x: &[f64]) -> Result<Complex64> {
        if x.len() != self.lattice.d() {
            return Err(Error::domain(format!("{} coordinates for d = {}", x.len(), self.lattice.d())));
        }
        if x.iter().any(|v| v.abs() > self.lattice.half_width() * (1.0 + 1e-12)) {
            return Err(Error::domain("argument outside the lattice"));
        }
        let cell: Vec<(usize, f64)> = x.iter().enumerate().map(|(j, &v)| self.lattice.locate(j, v)).collect();
        Ok(self.lattice.interpolate(&self.values, &cell))
    }

    /// Sup over the lattice of `|Φ − exact|`.
    pub fn sup_error(&self, exact: impl Fn(&[f64]) -> Complex64) -> f64 {
        (0..self.values.len())
            .map(|i| (self.values[i] - exact(&self.lattice.point(i))).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Sup of `|Φ(−x) − conj Φ(x)|`; the lattice is symmetric so `−x` is the
    /// mirrored index.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.values.len())
            .map(|i| (self.values[self.lattice.mirror(i)] - self.values[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let cols: Vec<String> = (1..=self.lattice.d()).map(|j| format!("x{j}")).collect();
        writeln!(out, "{},re,im", cols.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let p: Vec<String> = self.lattice.point(i).iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{},{},{}", p.join(","), v.re, v.im)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lambdas": self.lambdas,
            "lattice": self.spec,
            "points": self.lattice.len(),
            "iterations": self.iterations,
            "refinement_error": self.refinement_error,
            "residual": self.residual,
            "max_modulus": self.max_modulus(),
        })
    }
}

/// The increment pgf `f^Δ` with tabular outcomes restricted once.
enum Pgf<'a> {
    Builtin(&'a CouplingModel, &'a TimeGrid),
    Table(Vec<Outcome>),
}

impl Pgf<'_> {
    fn eval(&self, z: &[Complex64]) -> Complex64 {
        match self {
            Pgf::Builtin(m, g) => m.pgf_increments_unchecked(g, z),
            Pgf::Table(outs) => outs
                .iter()
                .map(|o| o.deltas.iter().zip(z).fold(Complex64::new(o.p, 0.0), |a, (&k, w)| a * w.powu(k as u32)))
                .sum(),
        }
    }
}

/// Per axis `j`, the cell of `x_k/λ_j` for every lattice index `k`, plus the
/// cell of 0.
struct ArgumentMaps {
    scaled: Vec<Vec<(usize, f64)>>,
    zero: Vec<(usize, f64)>,
}

impl ArgumentMaps {
    fn new(lat: &Lattice, lambdas: &[f64]) -> Self {
        let scaled = lambdas
            .iter()
            .enumerate()
            .map(|(j, &l)| lat.axis(j).iter().map(|&x| lat.locate(j, x / l)).collect())
            .collect();
        let zero = (0..lat.d()).map(|j| lat.locate(j, 0.0)).collect();
        ArgumentMaps { scaled, zero }
    }
}

/// One application of `Φ ↦ f^Δ[Φ(𝒰(x,λ,1,d)), …, Φ(𝒰(x,λ,d,d))]`, where
/// `𝒰(x,λ,r,d) = (0,…,0, x_r/λ_r, …, x_d/λ_d)`.
fn sweep(lat: &Lattice, maps: &ArgumentMaps, pgf: &Pgf<'_>, prev: &[Complex64]) -> Vec<Complex64> {
    let d = lat.d();
    (0..prev.len())
        .into_par_iter()
        .map(|i| {
            let ks = lat.unflatten(i);
            let mut z = [Complex64::new(0.0, 0.0); MAX_TRANSFORM_DIM];
            let mut cell = [(0usize, 0.0f64); MAX_TRANSFORM_DIM];
            for r in 0..d {
                for j in 0..d {
                    cell[j] = if j < r { maps.zero[j] } else { maps.scaled[j][ks[j]] };
                }
                z[r] = lat.interpolate(prev, &cell[..d]);
            }
            pgf.eval(&z[..d])
        })
        .collect()
}

fn run(lat: &Lattice, lambdas: &[f64], pgf: &Pgf<'_>, iterations: usize) -> (Vec<Complex64>, f64) {
    let maps = ArgumentMaps::new(lat, lambdas);
    let mut values: Vec<Complex64> = (0..lat.len())
        .into_par_iter()
        .map(|i| Complex64::new(0.0, lat.point(i).iter().sum::<f64>()).exp())
        .collect();
    for _ in 0..iterations {
        values = sweep(lat, &maps, pgf, &values);
    }
    let next = sweep(lat, &maps, pgf, &values);
    let residual = next.iter().zip(&values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    (values, residual)
}

/// Iterates the characteristic-function recursion `n` times from
/// `Φ^{(0)}(x) = exp(i Σ x_j)`.
pub fn iterate_transform(model: &CouplingModel, grid: &TimeGrid, config: &TransformConfig) -> Result<TransformGrid> {
    model.check_grid(grid)?;
    let lat = Lattice::new(&config.lattice, grid.points())?;
    let pgf = match model {
        CouplingModel::Tabular(t) => Pgf::Table(t.restricted(grid)?),
        _ => Pgf::Builtin(model, grid),
    };
    let lambdas = grid.points().to_vec();
    let (values, residual) = run(&lat, &lambdas, &pgf, config.iterations);
    let refinement_error = if config.refine {
        let fine = Lattice::new(&config.lattice.refined(), grid.points())?;
        let (fv, _) = run(&fine, &lambdas, &pgf, config.iterations);
        let mut err = 0.0f64;
        for i in 0..values.len() {
            let fi = lat.embed(i, &fine).ok_or_else(|| Error::domain("refined lattice does not contain the coarse one"))?;
            err = err.max((values[i] - fv[fi]).norm());
        }
        if err > config.refine_tolerance {
            return Err(Error::Accuracy(format!(
                "lattice refinement changes Φ by {err:.3e} (bound {:.3e}); use a finer step",
                config.refine_tolerance
            )));
        }
        Some(err)
    } else {
        None
    };
    Ok(TransformGrid { lambdas, spec: config.lattice, lattice: lat, iterations: config.iterations, values, refinement_error, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric_limit(l: f64, x: f64) -> Complex64 {
        let i = Complex64::i();
        (1.0 - l + i * x) / (1.0 - l + i * x * l)
    }

    fn cfg(spec: LatticeSpec, iterations: usize) -> TransformConfig {
        TransformConfig::new(iterations).lattice(spec).refine(false)
    }

    #[test]
    fn basic_invariants() {
        let grid = TimeGrid::new(vec![1.5, 2.0]).unwrap();
        for spec in [LatticeSpec::uniform(5.0, 0.25), LatticeSpec::SelfSimilar { half_width: 5.0, per_factor: 2, inner: 1e-3 }] {
            for model in CouplingModel::builtins() {
                let t = iterate_transform(&model, &grid, &cfg(spec, 6)).unwrap();
                assert!((t.at(&[0.0, 0.0]).unwrap() - 1.0).norm() < 1e-14);
                assert!(t.max_modulus() <= 1.0 + 1e-12);
                assert!(t.hermitian_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_iterations_is_initial_condition() {
        let grid = TimeGrid::single(2.0).unwrap();
        let t = iterate_transform(&CouplingModel::Poisson, &grid, &cfg(LatticeSpec::uniform(2.0, 0.5), 0)).unwrap();
        let e = t.sup_error(|x| Complex64::new(0.0, x[0]).exp());
        assert!(e < 1e-15);
    }

    #[test]
    fn self_similar_lattice_is_closed_under_the_maps() {
        let lat = Lattice::new(&LatticeSpec::SelfSimilar { half_width: 20.0, per_factor: 3, inner: 1e-6 }, &[1.5, 2.5]).unwrap();
        for j in 0..2 {
            let l = [1.5, 2.5][j];
            let a = lat.axis(j);
            let inner = a[a.len() / 2 + 1];
            for &x in a.iter().filter(|x| x.abs() / l >= inner * (1.0 - 1e-9)) {
                let (_, t) = lat.locate(j, x / l);
                assert!(t < 1e-9 || t > 1.0 - 1e-9, "x = {x}");
            }
        }
    }

    #[test]
    fn geometric_converges_to_closed_form() {
        let l = 2.0;
        let grid = TimeGrid::single(l).unwrap();
        let t = iterate_transform(&CouplingModel::Geometric, &grid, &cfg(LatticeSpec::self_similar(20.0), 100)).unwrap();
        let e = t.sup_error(|x| geometric_limit(l, x[0]));
        assert!(e < 1e-6, "sup error {e}");
        assert!(t.residual < 1e-6);
    }

    #[test]
    fn coarse_lattice_fails_refinement() {
        let grid = TimeGrid::single(1.5).unwrap();
        let c = TransformConfig { lattice: LatticeSpec::uniform(20.0, 2.0), iterations: 20, refine: true, refine_tolerance: 1e-6 };
        assert!(matches!(iterate_transform(&CouplingModel::Geometric, &grid, &c), Err(Error::Accuracy(_))));
    }

    #[test]
    fn dimension_limits() {
        let grid = TimeGrid::new(vec![1.2, 1.4, 1.6, 1.8]).unwrap();
        assert!(matches!(
            iterate_transform(&CouplingModel::Poisson, &grid, &TransformConfig::new(1)),
            Err(Error::Capability(_))
        ));
    }
}
