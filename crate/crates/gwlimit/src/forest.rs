//! Generation-by-generation simulation of the coupled populations
//! `(Z_n(λ_j))_{j≤d}`, with individuals aggregated by birth index.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingModel, GridSampler, TimeGrid, DEFAULT_BATCH_THRESHOLD};
use crate::error::{Error, Result};
use crate::stats::{batch_mean, Estimate};

pub const DEFAULT_CAP: u64 = 100_000_000;
/// Largest accepted cap; keeps aggregate Poisson means far below the
/// sampler's limit.
pub const MAX_CAP: u64 = 1_000_000_000_000_000_000;

/// Generation-`n` individuals counted by birth index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLedger {
    pub counts: Vec<u64>,
    pub generation: usize,
}

impl GenerationLedger {
    /// The generation-0 ledger `(1, 0, …, 0)`.
    pub fn root(d: usize) -> Self {
        let mut counts = vec![0; d];
        if d > 0 {
            counts[0] = 1;
        }
        GenerationLedger { counts, generation: 0 }
    }

    /// `Z_n(λ_j)` for every `j`.
    pub fn z(&self) -> Vec<u64> {
        self.counts
            .iter()
            .scan(0u64, |acc, &c| {
                *acc = acc.saturating_add(c);
                Some(*acc)
            })
            .collect()
    }

    pub fn is_extinct(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// Overflow during one generation step, carrying the partial result.
#[derive(Debug, Clone, PartialEq)]
pub struct Overflow {
    pub partial: GenerationLedger,
    /// First grid index (0-based) whose population exceeds the cap.
    pub first_index: usize,
    pub cap: u64,
}

impl From<Overflow> for Error {
    fn from(o: Overflow) -> Self {
        Error::Overflow { generation: o.partial.generation, cap: o.cap }
    }
}

/// One generation step with a prepared sampler.
pub fn advance_with<R: rand::Rng + ?Sized>(
    ledger: &GenerationLedger,
    sampler: &GridSampler,
    rng: &mut R,
    cap: u64,
) -> std::result::Result<GenerationLedger, Overflow> {
    let d = ledger.counts.len();
    let mut next = vec![0u64; d];
    for (i, &m) in ledger.counts.iter().enumerate() {
        sampler.add_offspring(i, m, rng, &mut next);
    }
    let out = GenerationLedger { counts: next, generation: ledger.generation + 1 };
    match out.z().iter().position(|&z| z > cap) {
        Some(first_index) => Err(Overflow { partial: out, first_index, cap }),
        None => Ok(out),
    }
}

pub fn advance_generation<R: rand::Rng + ?Sized>(
    ledger: &GenerationLedger,
    model: &CouplingModel,
    grid: &TimeGrid,
    rng: &mut R,
    cap: u64,
) -> Result<std::result::Result<GenerationLedger, Overflow>> {
    if ledger.counts.len() != grid.d() {
        return Err(Error::domain(format!("ledger has {} slots, grid has {}", ledger.counts.len(), grid.d())));
    }
    let s = model.sampler(grid)?;
    Ok(advance_with(ledger, &s, rng, cap))
}

/// Which generations an ensemble keeps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Record {
    All,
    Only(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub generations: usize,
    pub replicates: usize,
    pub seed: u64,
    pub cap: u64,
    pub batch_threshold: u64,
    pub record: Record,
}

impl SimConfig {
    pub fn new(generations: usize, replicates: usize, seed: u64) -> Self {
        SimConfig {
            generations,
            replicates,
            seed,
            cap: DEFAULT_CAP,
            batch_threshold: DEFAULT_BATCH_THRESHOLD,
            record: Record::All,
        }
    }

    pub fn cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn only(mut self, gens: Vec<usize>) -> Self {
        self.record = Record::Only(gens);
        self
    }

    pub fn last_only(self) -> Self {
        let n = self.generations;
        self.only(vec![n])
    }
}

/// Per-replicate overflow marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverflowFlag {
    pub generation: usize,
    pub first_index: usize,
}

/// `R` independent coupled path arrays. Z counts are stored; normalized
/// values `W_n(λ_j) = Z_n(λ_j)/λ_j^n` are derived on access. Overflowed
/// slots hold `u64::MAX`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub model: CouplingModel,
    pub grid: TimeGrid,
    pub config: SimConfig,
    recorded: Vec<usize>,
    z: Vec<u64>,
    flags: Vec<Option<OverflowFlag>>,
}

pub fn simulate_paths(model: &CouplingModel, grid: &TimeGrid, config: &SimConfig) -> Result<PathEnsemble> {
    if config.replicates == 0 {
        return Err(Error::domain("need at least one replicate"));
    }
    if config.cap == 0 || config.cap > MAX_CAP {
        return Err(Error::domain(format!("cap must lie in [1, {MAX_CAP}]")));
    }
    let sampler = model.sampler(grid)?.with_threshold(config.batch_threshold);
    let recorded: Vec<usize> = match &config.record {
        Record::All => (0..=config.generations).collect(),
        Record::Only(g) => {
            let mut g = g.clone();
            g.sort_unstable();
            g.dedup();
            if g.last().is_some_and(|&n| n > config.generations) {
                return Err(Error::domain("recorded generation beyond the horizon"));
            }
            g
        }
    };
    let d = grid.d();
    let per_rep = recorded.len() * d;
    let shards: Vec<(Vec<u64>, Option<OverflowFlag>)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| simulate_one(&sampler, d, config, &recorded, r as u64, per_rep))
        .collect();
    let mut z = Vec::with_capacity(per_rep * config.replicates);
    let mut flags = Vec::with_capacity(config.replicates);
    for (zs, f) in shards {
        z.extend_from_slice(&zs);
        flags.push(f);
    }
    Ok(PathEnsemble { model: model.clone(), grid: grid.clone(), config: config.clone(), recorded, z, flags })
}

/// Stream for replicate `r`: the base seed with the replicate index as the
/// ChaCha stream id, so draws do not depend on the worker layout.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

fn simulate_one(
    sampler: &GridSampler,
    d: usize,
    config: &SimConfig,
    recorded: &[usize],
    r: u64,
    per_rep: usize,
) -> (Vec<u64>, Option<OverflowFlag>) {
    let mut rng = replicate_rng(config.seed, r);
    let mut out = Vec::with_capacity(per_rep);
    let mut counts = GenerationLedger::root(d).counts;
    // Grid indices below `active` still evolve; those above have overflowed.
    let mut active = d;
    let mut flag = None;
    let mut rec = recorded.iter().peekable();
    let mut push = |n: usize, counts: &[u64], active: usize, out: &mut Vec<u64>| {
        if rec.peek() == Some(&&n) {
            rec.next();
            let mut acc = 0u64;
            for (j, &c) in counts.iter().enumerate() {
                acc = acc.saturating_add(c);
                out.push(if j >= active { u64::MAX } else { acc });
            }
        }
    };
    push(0, &counts, active, &mut out);
    let mut next = vec![0u64; d];
    for n in 1..=config.generations {
        next.iter_mut().for_each(|x| *x = 0);
        if counts[..active].iter().any(|&c| c > 0) {
            for i in 0..active {
                sampler.add_offspring(i, counts[i], &mut rng, &mut next);
            }
        }
        for x in next[active..].iter_mut() {
            *x = 0;
        }
        let mut acc = 0u64;
        for j in 0..active {
            acc = acc.saturating_add(next[j]);
            if acc > config.cap {
                if flag.is_none() {
                    flag = Some(OverflowFlag { generation: n, first_index: j });
                }
                active = j;
                break;
            }
        }
        for x in next[active..].iter_mut() {
            *x = 0;
        }
        std::mem::swap(&mut counts, &mut next);
        push(n, &counts, active, &mut out);
    }
    (out, flag)
}

impl PathEnsemble {
    pub fn replicates(&self) -> usize {
        self.flags.len()
    }

    pub fn d(&self) -> usize {
        self.grid.d()
    }

    pub fn recorded(&self) -> &[usize] {
        &self.recorded
    }

    fn slot(&self, n: usize) -> Result<usize> {
        self.recorded
            .binary_search(&n)
            .map_err(|_| Error::domain(format!("generation {n} was not recorded")))
    }

    /// `Z_n(λ_j)` for replicate `r` (j is 0-based); `u64::MAX` once the slot
    /// overflowed.
    pub fn z(&self, r: usize, n: usize, j: usize) -> Result<u64> {
        let s = self.slot(n)?;
        let d = self.d();
        Ok(self.z[(r * self.recorded.len() + s) * d + j])
    }

    /// `W_n(λ_j)`; infinite for overflowed slots.
    pub fn w(&self, r: usize, n: usize, j: usize) -> Result<f64> {
        let z = self.z(r, n, j)?;
        Ok(self.normalize(z, n, j))
    }

    fn normalize(&self, z: u64, n: usize, j: usize) -> f64 {
        if z == u64::MAX {
            f64::INFINITY
        } else {
            z as f64 / self.grid.points()[j].powi(n as i32)
        }
    }

    /// All `W_n(λ_·)` of one replicate at generation `n`.
    pub fn w_row(&self, r: usize, n: usize) -> Result<Vec<f64>> {
        (0..self.d()).map(|j| self.w(r, n, j)).collect()
    }

    pub fn overflow(&self, r: usize) -> Option<OverflowFlag> {
        self.flags[r]
    }

    pub fn overflow_count(&self) -> usize {
        self.flags.iter().filter(|f| f.is_some()).count()
    }

    /// Replicates kept for moment statistics.
    pub fn clean_replicates(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.replicates()).filter(|&r| self.flags[r].is_none())
    }

    /// Fraction of replicates with `Z_n(λ_j) > 0`, per grid index.
    /// Overflowed replicates count as surviving.
    pub fn survival_frequency(&self, n: usize) -> Result<Vec<f64>> {
        let s = self.slot(n)?;
        let (d, k) = (self.d(), self.recorded.len());
        let r = self.replicates();
        Ok((0..d)
            .map(|j| (0..r).filter(|&i| self.z[(i * k + s) * d + j] > 0).count() as f64 / r as f64)
            .collect())
    }

    /// Extinction indicator estimate `P(Z_n(λ_j) = 0)` with batch-means SE.
    pub fn extinct_fraction(&self, n: usize, j: usize) -> Result<Estimate> {
        let v: Vec<f64> = (0..self.replicates())
            .map(|r| self.z(r, n, j).map(|z| if z == 0 { 1.0 } else { 0.0 }))
            .collect::<Result<_>>()?;
        Ok(batch_mean(&v))
    }

    /// Batch-means estimate of `E f(W_n(λ_·))` over non-overflowed replicates.
    pub fn expect(&self, n: usize, f: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        let mut vals = Vec::with_capacity(self.replicates());
        for r in self.clean_replicates() {
            vals.push(f(&self.w_row(r, n)?));
        }
        Ok(batch_mean(&vals))
    }

    /// Values `W_n(λ_j)` of non-overflowed replicates.
    pub fn column(&self, n: usize, j: usize) -> Result<Vec<f64>> {
        self.clean_replicates().map(|r| self.w(r, n, j)).collect()
    }

    pub fn sidecar(&self, extra: Option<serde_json::Value>) -> serde_json::Value {
        serde_json::json!({
            "version": crate::VERSION,
            "model": self.model,
            "grid": self.grid.points(),
            "generations": self.config.generations,
            "replicates": self.config.replicates,
            "seed": self.config.seed,
            "cap": self.config.cap,
            "recorded_generations": self.recorded,
            "sampling": {
                "batch_threshold": self.config.batch_threshold,
                "rule": "per-individual draws up to the threshold, aggregate multinomial/negative-binomial draws above; poisson always additive",
            },
            "overflowed_replicates": self.overflow_count(),
            "config": extra,
        })
    }

    /// Columnar CSV: `replicate,generation,grid_index,W,Z,flags`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "replicate,generation,grid_index,W,Z,flags")?;
        let d = self.d();
        for r in 0..self.replicates() {
            for (s, &n) in self.recorded.iter().enumerate() {
                for j in 0..d {
                    let z = self.z[(r * self.recorded.len() + s) * d + j];
                    let flag = match self.flags[r] {
                        Some(_) if z == u64::MAX => "overflow",
                        Some(_) => "flagged",
                        None => "ok",
                    };
                    if z == u64::MAX {
                        writeln!(out, "{r},{n},{},inf,,{flag}", j + 1)?;
                    } else {
                        writeln!(out, "{r},{n},{},{},{z},{flag}", j + 1, self.normalize(z, n, j))?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}
