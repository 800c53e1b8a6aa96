//! Small statistical helpers: running moments, batch-means standard errors,
//! Kolmogorov-Smirnov and chi-square tests, least squares.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `target`.
    pub fn z(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if diff == 0.0 {
            0.0
        } else if self.se == 0.0 {
            f64::INFINITY
        } else {
            diff / self.se
        }
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        self.z(target) <= k
    }
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 { 0.0 } else { (self.variance() / self.n as f64).sqrt() };
        Estimate { mean: self.mean, se, n: self.n }
    }
}

/// Sample mean with a standard error from `BATCHES` contiguous batch means.
/// Falls back to the iid formula with fewer than `2·BATCHES` values.
pub fn batch_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    if n < 2 * BATCHES {
        let mut m = Moments::default();
        values.iter().for_each(|&x| m.push(x));
        return m.estimate();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut bm = Moments::default();
    for b in 0..BATCHES {
        let (lo, hi) = (b * n / BATCHES, (b + 1) * n / BATCHES);
        bm.push(values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64);
    }
    Estimate { mean, se: (bm.variance() / BATCHES as f64).sqrt(), n: n as u64 }
}

/// Batch-means estimate of a ratio of means `E[a]/E[b]` (delta method on
/// per-batch ratios).
pub fn batch_ratio(a: &[f64], b: &[f64]) -> Estimate {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let mean = if sb == 0.0 { 0.0 } else { sa / sb };
    if n < 2 * BATCHES {
        return Estimate { mean, se: 0.0, n: n as u64 };
    }
    let mut bm = Moments::default();
    for k in 0..BATCHES {
        let (lo, hi) = (k * n / BATCHES, (k + 1) * n / BATCHES);
        let num: f64 = a[lo..hi].iter().sum();
        let den: f64 = b[lo..hi].iter().sum();
        bm.push(if den == 0.0 { 0.0 } else { num / den });
    }
    Estimate { mean, se: (bm.variance() / BATCHES as f64).sqrt(), n: n as u64 }
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample KS test against a continuous CDF.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    let nf = n as f64;
    let mut dmax = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        dmax = dmax.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * dmax);
    KsResult { statistic: dmax, p_value: p, n }
}

/// Two-sample chi-square homogeneity test on integer observations, pooling
/// bins so that every expected count is at least 5.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    use std::collections::BTreeMap;
    let mut table: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &x in a {
        table.entry(x).or_default().0 += 1.0;
    }
    for &x in b {
        table.entry(x).or_default().1 += 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (_, &(ca, cb)) in &table {
        cur.0 += ca;
        cur.1 += cb;
        let tot = cur.0 + cur.1;
        if tot * na.min(nb) / n >= 5.0 {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.0 + cur.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    let mut stat = 0.0;
    for &(ca, cb) in &bins {
        let tot = ca + cb;
        let (ea, eb) = (tot * na / n, tot * nb / n);
        stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
    }
    let dof = bins.len().saturating_sub(1);
    let p = if dof == 0 { 1.0 } else { 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(stat) };
    (stat, dof, p)
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_direct() {
        let xs = [1.0, 2.0, 4.0, 7.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        assert!((m.mean() - 3.5).abs() < 1e-15);
        assert!((m.variance() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ≈ 0.049, P(K > 1.63) ≈ 0.0098.
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_sf(1.63) - 0.0098).abs() < 5e-4);
    }

    #[test]
    fn ks_uniform_grid_accepts() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.statistic <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 2.0 * v).collect();
        let (a, b) = ols(&x, &y);
        assert!((a - 1.5).abs() < 1e-12 && (b + 2.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_identical_samples() {
        let a: Vec<u64> = (0..1000).map(|i| i % 7).collect();
        let (_, dof, p) = chi_square_two_sample(&a, &a);
        assert_eq!(dof, 6);
        assert!(p > 0.999);
    }
}
