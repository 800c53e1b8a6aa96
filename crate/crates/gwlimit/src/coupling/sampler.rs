use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Binomial, Gamma, Geometric, Poisson};

use super::{CouplingModel, Outcome, TimeGrid};
use crate::error::Result;

/// Above this many individuals of one birth index, offspring are drawn as a
/// single aggregate (multinomial / negative-binomial) variate.
pub const DEFAULT_BATCH_THRESHOLD: u64 = 32;

/// Precomputed samplers for one (model, grid) pair.
#[derive(Debug, Clone)]
pub struct GridSampler {
    imp: Imp,
    lam: Vec<f64>,
    threshold: u64,
}

#[derive(Debug, Clone)]
enum Imp {
    Binary,
    Poisson,
    Geometric { geo: Vec<Geometric>, gate: Vec<f64> },
    Tabular { index: WeightedIndex<f64>, outcomes: Vec<Outcome> },
}

impl GridSampler {
    pub fn new(model: &CouplingModel, grid: &TimeGrid) -> Result<Self> {
        model.check_grid(grid)?;
        let d = grid.d();
        let lam: Vec<f64> = (0..=d).map(|j| grid.lambda(j)).collect();
        let imp = match model {
            CouplingModel::Binary => Imp::Binary,
            CouplingModel::Poisson => Imp::Poisson,
            CouplingModel::Geometric => {
                let geo = (1..=d).map(|j| Geometric::new(1.0 / (1.0 + lam[j])).expect("p in (0,1)")).collect();
                let gate = (1..=d).map(|j| if j == 1 { 1.0 } else { (lam[j] - lam[j - 1]) / (1.0 + lam[j]) }).collect();
                Imp::Geometric { geo, gate }
            }
            CouplingModel::Tabular(t) => {
                let outcomes = t.restricted(grid)?;
                let index = WeightedIndex::new(outcomes.iter().map(|o| o.p))
                    .map_err(|e| crate::error::Error::domain(format!("tabular weights: {e}")))?;
                Imp::Tabular { index, outcomes }
            }
        };
        Ok(GridSampler { imp, lam, threshold: DEFAULT_BATCH_THRESHOLD })
    }

    pub fn with_threshold(mut self, threshold: u64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn d(&self) -> usize {
        self.lam.len() - 1
    }

    /// One joint draw of the increments, written into `out`.
    pub fn sample_increments<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u64]) {
        let d = self.d();
        out.iter_mut().for_each(|x| *x = 0);
        if d == 0 {
            return;
        }
        match &self.imp {
            Imp::Binary => {
                let u: f64 = rng.random();
                if let Some(k) = (1..=d).find(|&k| u <= self.lam[k] / 2.0) {
                    out[k - 1] = 2;
                }
            }
            Imp::Poisson => {
                for j in 1..=d {
                    out[j - 1] = poisson(rng, self.lam[j] - self.lam[j - 1]);
                }
            }
            Imp::Geometric { geo, gate } => {
                out[0] = geo[0].sample(rng);
                for j in 2..=d {
                    if rng.random::<f64>() < gate[j - 1] {
                        out[j - 1] = 1 + geo[j - 1].sample(rng);
                    }
                }
            }
            Imp::Tabular { index, outcomes } => {
                out.copy_from_slice(&outcomes[index.sample(rng)].deltas);
            }
        }
    }

    /// Adds to `next` the children of `m` individuals of birth index `birth`
    /// (0-based): an individual born at `i` has `X(λ_i)` children of birth
    /// index `i` and `ΔX(λ_j)` of birth index `j` for `j > i`.
    pub fn add_offspring<R: Rng + ?Sized>(&self, birth: usize, m: u64, rng: &mut R, next: &mut [u64]) {
        if m == 0 {
            return;
        }
        let d = self.d();
        let i = birth + 1;
        if let Imp::Poisson = self.imp {
            next[birth] += poisson(rng, m as f64 * self.lam[i]);
            for j in i + 1..=d {
                next[j - 1] += poisson(rng, m as f64 * (self.lam[j] - self.lam[j - 1]));
            }
            return;
        }
        if m <= self.threshold {
            let mut buf = vec![0u64; d];
            for _ in 0..m {
                self.sample_increments(rng, &mut buf);
                next[birth] += buf[..i].iter().sum::<u64>();
                for j in i + 1..=d {
                    next[j - 1] += buf[j - 1];
                }
            }
            return;
        }
        match &self.imp {
            Imp::Binary => {
                // Category "first index ≤ i" then each later index, then none.
                let mut probs = Vec::with_capacity(d - i + 1);
                probs.push(self.lam[i] / 2.0);
                for j in i + 1..=d {
                    probs.push((self.lam[j] - self.lam[j - 1]) / 2.0);
                }
                let counts = multinomial(rng, m, &probs);
                for (c, &x) in counts.iter().enumerate() {
                    next[birth + c] += 2 * x;
                }
            }
            Imp::Geometric { gate, .. } => {
                next[birth] += negative_binomial(rng, m, self.lam[i]);
                for j in i + 1..=d {
                    let c = binomial(rng, m, gate[j - 1]);
                    next[j - 1] += c + negative_binomial(rng, c, self.lam[j]);
                }
            }
            Imp::Tabular { outcomes, .. } => {
                let probs: Vec<f64> = outcomes.iter().map(|o| o.p).collect();
                let counts = multinomial(rng, m, &probs);
                for (o, &c) in outcomes.iter().zip(&counts) {
                    if c == 0 {
                        continue;
                    }
                    next[birth] += c * o.deltas[..i].iter().sum::<u64>();
                    for j in i + 1..=d {
                        next[j - 1] += c * o.deltas[j - 1];
                    }
                }
            }
            Imp::Poisson => unreachable!(),
        }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite Poisson mean").sample(rng) as u64
}

pub(crate) fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Sum of `n` iid geometric variables of mean `lambda`, as a gamma-mixed
/// Poisson.
pub(crate) fn negative_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, lambda: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    let g: f64 = Gamma::new(n as f64, lambda).expect("valid gamma").sample(rng);
    poisson(rng, g)
}

/// Multinomial counts over the given cell probabilities (the residual mass
/// 1 − Σp is an implicit discarded cell).
pub(crate) fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0f64;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let x = if left == 0 || mass <= 0.0 { 0 } else { binomial(rng, left, (p / mass).min(1.0)) };
        out.push(x);
        left -= x;
        mass -= p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_outcomes() {
        let grid = TimeGrid::new(vec![1.2, 1.8]).unwrap();
        let s = GridSampler::new(&CouplingModel::Binary, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut out = [0u64; 2];
        let mut counts = [0u32; 3];
        for _ in 0..60_000 {
            s.sample_increments(&mut rng, &mut out);
            match out {
                [2, 0] => counts[0] += 1,
                [0, 2] => counts[1] += 1,
                [0, 0] => counts[2] += 1,
                other => panic!("impossible outcome {other:?}"),
            }
        }
        let f: Vec<f64> = counts.iter().map(|&c| c as f64 / 60_000.0).collect();
        assert!((f[0] - 0.6).abs() < 0.01 && (f[1] - 0.3).abs() < 0.01 && (f[2] - 0.1).abs() < 0.01);
    }

    #[test]
    fn batch_and_individual_means_agree() {
        let grid = TimeGrid::new(vec![1.4, 2.0, 2.6]).unwrap();
        for model in CouplingModel::builtins() {
            let grid = if model == CouplingModel::Binary { TimeGrid::new(vec![1.2, 1.5, 1.9]).unwrap() } else { grid.clone() };
            let s = GridSampler::new(&model, &grid).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let m = 1000u64;
            let reps = 400;
            let mut tot = [0f64; 3];
            for _ in 0..reps {
                let mut next = [0u64; 3];
                s.add_offspring(1, m, &mut rng, &mut next);
                assert_eq!(next[0], 0);
                for j in 0..3 {
                    tot[j] += next[j] as f64;
                }
            }
            let want = [0.0, m as f64 * grid.lambda(2), m as f64 * grid.delta(3)];
            for j in 1..3 {
                let mean = tot[j] / reps as f64;
                assert!((mean - want[j]).abs() < 0.02 * want[j], "{model:?} {j} {mean} {}", want[j]);
            }
        }
    }

    #[test]
    fn empty_grid() {
        let s = GridSampler::new(&CouplingModel::Poisson, &TimeGrid::new(vec![]).unwrap()).unwrap();
        let mut out: [u64; 0] = [];
        s.sample_increments(&mut ChaCha8Rng::seed_from_u64(0), &mut out);
    }
}
