//! Monte Carlo means with standard errors.
//!
//! Work is cut into fixed-size chunks of sample indices; each chunk is summed
//! pairwise and the chunk totals are summed pairwise again. The result is
//! therefore independent of the number of worker threads.

use rayon::prelude::*;

pub const CHUNK: usize = 1024;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_moments(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean, stderr: (var / nf).sqrt(), n }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr
    }
}

/// Deterministic parallel reduction of `k` per-sample values over `n`
/// samples: returns the pairwise sums of each component.
pub fn sum_samples<const K: usize, F>(n: usize, f: F) -> [f64; K]
where
    F: Fn(u64) -> [f64; K] + Sync,
{
    let chunks: Vec<[f64; K]> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let rows: Vec<[f64; K]> = (lo..hi).map(|i| f(i as u64)).collect();
            std::array::from_fn(|k| pairwise_sum(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        })
        .collect();
    std::array::from_fn(|k| pairwise_sum(&chunks.iter().map(|r| r[k]).collect::<Vec<_>>()))
}

/// Mean and standard error of `f(i)` over sample indices `0..n`.
pub fn mean_of<F>(n: usize, f: F) -> Estimate
where
    F: Fn(u64) -> f64 + Sync,
{
    let [s, s2] = sum_samples(n, |i| {
        let v = f(i);
        [v, v * v]
    });
    Estimate::from_moments(s, s2, n)
}

/// Per-column sums, sums of squares and maxima of absolute values over
/// sample rows of fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStats {
    pub n: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub max_abs: Vec<f64>,
}

impl RowStats {
    fn from_rows(rows: &[Vec<f64>], width: usize) -> Self {
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        RowStats {
            n: rows.len(),
            sum: (0..width).map(|k| pairwise_sum(&col(k))).collect(),
            sum_sq: (0..width).map(|k| pairwise_sum(&col(k).iter().map(|v| v * v).collect::<Vec<_>>())).collect(),
            max_abs: (0..width).map(|k| col(k).iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect(),
        }
    }

    fn merge(parts: &[RowStats]) -> RowStats {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let mid = parts.len() / 2;
        let (a, b) = (Self::merge(&parts[..mid]), Self::merge(&parts[mid..]));
        let zip = |x: &[f64], y: &[f64], f: fn(f64, f64) -> f64| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect();
        RowStats {
            n: a.n + b.n,
            sum: zip(&a.sum, &b.sum, |p, q| p + q),
            sum_sq: zip(&a.sum_sq, &b.sum_sq, |p, q| p + q),
            max_abs: zip(&a.max_abs, &b.max_abs, f64::max),
        }
    }

    pub fn width(&self) -> usize {
        self.sum.len()
    }

    pub fn estimate(&self, k: usize) -> Estimate {
        Estimate::from_moments(self.sum[k], self.sum_sq[k], self.n)
    }
}

/// [`RowStats`] of `f(i)`, `i < n`, with the same chunked reduction as
/// [`sum_samples`]. Every row must have length `width`.
pub fn row_stats<F>(n: usize, width: usize, f: F) -> RowStats
where
    F: Fn(u64) -> Vec<f64> + Sync,
{
    if n == 0 {
        return RowStats { n: 0, sum: vec![0.0; width], sum_sq: vec![0.0; width], max_abs: vec![0.0; width] };
    }
    let parts: Vec<RowStats> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let rows: Vec<Vec<f64>> = (lo..hi).map(|i| f(i as u64)).collect();
            debug_assert!(rows.iter().all(|r| r.len() == width));
            RowStats::from_rows(&rows, width)
        })
        .collect();
    RowStats::merge(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs = vec![0.1; 1_000_000];
        assert!((pairwise_sum(&xs) - 100_000.0).abs() < 1e-8);
    }

    #[test]
    fn thread_count_does_not_change_sums() {
        let f = |i: u64| ((i as f64) * 0.618_033_988_7).fract() - 0.5;
        let a = mean_of(50_000, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mean_of(50_000, f));
        assert_eq!(a, b);
    }

    #[test]
    fn moments() {
        let e = mean_of(4, |i| [1.0, 2.0, 3.0, 4.0][i as usize]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn row_stats_match_direct_moments() {
        let f = |i: u64| vec![i as f64, -(i as f64) * 0.5, 1.0];
        let r = row_stats(3000, 3, f);
        assert_eq!(r.n, 3000);
        assert_eq!(r.sum[0], 2999.0 * 3000.0 / 2.0);
        assert_eq!(r.max_abs[1], 2999.0 * 0.5);
        assert_eq!(r.estimate(2).mean, 1.0);
        assert_eq!(r.estimate(2).stderr, 0.0);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        assert_eq!(pool.install(|| row_stats(3000, 3, f)), r);
    }
}
