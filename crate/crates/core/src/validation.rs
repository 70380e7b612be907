//! Cluster validation: biased MMD with a Gaussian kernel, within/between
//! cluster self-similarity scores, and the Davies-Bouldin, Dunn and
//! alpha-average Silhouette indexes.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::Metric;
use crate::error::{Error, Result};
use crate::measures::median;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub bandwidth: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { bandwidth: 0.1 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth > 0.0 && self.bandwidth.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("kernel bandwidth must be positive, got {}", self.bandwidth)))
        }
    }
}

/// How MMD draws are sampled from clusters.
///
/// Each draw compares two samples of `sample_size` members; every member
/// is one point of `R^h1` (its window of returns, sorted ascending when
/// `ordered`). With `sample_size = 1` a draw is a single pair of members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmdSamplingConfig {
    pub n_pairs: usize,
    pub seed: u64,
    pub ordered: bool,
    pub sample_size: usize,
}

impl Default for MmdSamplingConfig {
    fn default() -> Self {
        Self { n_pairs: 1000, seed: 0, ordered: true, sample_size: 1 }
    }
}

impl MmdSamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.sample_size == 0 {
            return Err(Error::InvalidConfig("n_pairs and sample_size must be positive".into()));
        }
        Ok(())
    }
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    Ok(kernel_unchecked(x, y, sigma))
}

#[inline]
fn kernel_unchecked(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Biased squared-MMD estimate before clamping. Mathematically
/// non-negative; rounding can push it slightly below zero.
pub fn mmd_squared_unclamped<X: AsRef<[f64]> + Sync>(x: &[X], y: &[X], kcfg: &KernelConfig) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let dim = x[0].as_ref().len();
    if let Some(bad) = x.iter().chain(y).find(|v| v.as_ref().len() != dim) {
        return Err(Error::LengthMismatch(dim, bad.as_ref().len()));
    }
    let sigma = kcfg.bandwidth;
    // fixed argument order keeps the estimate bitwise symmetric
    let (x, y) = if sample_order(x, y).is_gt() { (y, x) } else { (x, y) };
    let mean_kernel = |a: &[X], b: &[X]| -> f64 {
        let total: f64 = a.iter().map(|u| b.iter().map(|v| kernel_unchecked(u.as_ref(), v.as_ref(), sigma)).sum::<f64>()).sum();
        total / (a.len() * b.len()) as f64
    };
    Ok(mean_kernel(x, x) - 2.0 * mean_kernel(x, y) + mean_kernel(y, y))
}

fn sample_order<X: AsRef<[f64]>>(x: &[X], y: &[X]) -> std::cmp::Ordering {
    x.len().cmp(&y.len()).then_with(|| {
        x.iter()
            .flat_map(|v| v.as_ref())
            .zip(y.iter().flat_map(|v| v.as_ref()))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Biased MMD estimate, the square root of the clamped squared estimate.
pub fn mmd_biased<X: AsRef<[f64]> + Sync>(x: &[X], y: &[X], kcfg: &KernelConfig) -> Result<f64> {
    Ok(mmd_squared_unclamped(x, y, kcfg)?.max(0.0).sqrt())
}

/// Median of the sampled squared MMDs together with every sampled value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub score: f64,
    pub values: Vec<f64>,
}

impl SimilarityScore {
    fn from_values(values: Vec<f64>) -> Self {
        let score = median(&values).unwrap_or(f64::NAN);
        Self { score, values }
    }
}

fn prepare(members: &[Vec<f64>], ordered: bool) -> Vec<Vec<f64>> {
    members
        .iter()
        .map(|m| {
            let mut v = m.clone();
            if ordered {
                v.sort_by(f64::total_cmp);
            }
            v
        })
        .collect()
}

/// Unordered pair `t` of `0..n` in lexicographic order `(0,1), (0,2), ...`.
fn decode_pair(t: usize, n: usize) -> (usize, usize) {
    let total = n * (n - 1) / 2;
    // row i starts at offset total - (n - i)(n - i - 1)/2
    let remaining = total - t; // pairs from t to the end, >= 1
    let mut r = ((1.0 + (1.0 + 8.0 * remaining as f64).sqrt()) / 2.0).floor() as usize;
    while r > 2 && (r - 1) * (r - 2) / 2 >= remaining {
        r -= 1;
    }
    while r * (r - 1) / 2 < remaining {
        r += 1;
    }
    // r = n - i, the number of indices from i to n-1
    let i = n - r;
    let row_start = total - r * (r - 1) / 2;
    (i, i + 1 + (t - row_start))
}

/// Draw plan: index sets for the two samples of each draw. Pairs are unique
/// within a batch of at most `available` draws; batches repeat when more
/// draws are requested than distinct pairs exist.
fn plan_pairs(available: usize, n_pairs: usize, seed: u64, decode: impl Fn(usize) -> (usize, usize)) -> Vec<(usize, usize)> {
    let mut rng = rng::stream(seed, 0);
    let mut plan = Vec::with_capacity(n_pairs);
    while plan.len() < n_pairs {
        let take = (n_pairs - plan.len()).min(available);
        plan.extend(index::sample(&mut rng, available, take).into_iter().map(&decode));
    }
    plan
}

fn evaluate_draws(draws: &[(Vec<usize>, Vec<usize>)], left: &[Vec<f64>], right: &[Vec<f64>], kcfg: &KernelConfig) -> Result<Vec<f64>> {
    draws
        .par_iter()
        .map(|(xi, yi)| {
            let x: Vec<&[f64]> = xi.iter().map(|&i| left[i].as_slice()).collect();
            let y: Vec<&[f64]> = yi.iter().map(|&j| right[j].as_slice()).collect();
            Ok(mmd_squared_unclamped(&x, &y, kcfg)?.max(0.0))
        })
        .collect()
}

/// Self-similarity of one cluster: median squared biased MMD over sampled
/// pairs of distinct members.
pub fn within_cluster_similarity(cluster: &[Vec<f64>], cfg: &MmdSamplingConfig, kcfg: &KernelConfig) -> Result<SimilarityScore> {
    cfg.validate()?;
    kcfg.validate()?;
    let n = cluster.len();
    let s = cfg.sample_size;
    if n < 2 * s {
        return Err(Error::ClusterTooSmall(n, 2 * s));
    }
    let members = prepare(cluster, cfg.ordered);
    let draws: Vec<(Vec<usize>, Vec<usize>)> = if s == 1 {
        plan_pairs(n * (n - 1) / 2, cfg.n_pairs, cfg.seed, |t| decode_pair(t, n)).into_iter().map(|(i, j)| (vec![i], vec![j])).collect()
    } else {
        let mut rng = rng::stream(cfg.seed, 0);
        (0..cfg.n_pairs)
            .map(|_| {
                let picked = index::sample(&mut rng, n, 2 * s).into_vec();
                (picked[..s].to_vec(), picked[s..].to_vec())
            })
            .collect()
    };
    Ok(SimilarityScore::from_values(evaluate_draws(&draws, &members, &members, kcfg)?))
}

/// Between-cluster score: same statistic over pairs drawn across clusters.
pub fn between_cluster_mmd(c1: &[Vec<f64>], c2: &[Vec<f64>], cfg: &MmdSamplingConfig, kcfg: &KernelConfig) -> Result<SimilarityScore> {
    cfg.validate()?;
    kcfg.validate()?;
    if c1.is_empty() {
        return Err(Error::EmptyCluster(0));
    }
    if c2.is_empty() {
        return Err(Error::EmptyCluster(1));
    }
    let s = cfg.sample_size;
    if c1.len() < s || c2.len() < s {
        return Err(Error::ClusterTooSmall(c1.len().min(c2.len()), s));
    }
    let (left, right) = (prepare(c1, cfg.ordered), prepare(c2, cfg.ordered));
    let m = c2.len();
    let draws: Vec<(Vec<usize>, Vec<usize>)> = if s == 1 {
        plan_pairs(c1.len() * m, cfg.n_pairs, cfg.seed, |t| (t / m, t % m)).into_iter().map(|(i, j)| (vec![i], vec![j])).collect()
    } else {
        let mut rng = rng::stream(cfg.seed, 0);
        (0..cfg.n_pairs)
            .map(|_| {
                let x = index::sample(&mut rng, c1.len(), s).into_vec();
                let y = index::sample(&mut rng, m, s).into_vec();
                (x, y)
            })
            .collect()
    };
    Ok(SimilarityScore::from_values(evaluate_draws(&draws, &left, &right, kcfg)?))
}

fn cluster_members(assignments: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); k];
    for (i, &a) in assignments.iter().enumerate() {
        if a >= k {
            return Err(Error::InvalidConfig(format!("assignment {a} out of range for k = {k}")));
        }
        members[a].push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCluster(empty));
    }
    Ok(members)
}

fn require_two_clusters(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("index needs k >= 2, got {k}")));
    }
    Ok(())
}

/// `(1/k) sum_i max_{j != i} (d_i + d_j) / d(c_i, c_j)` where `d_l` is the
/// mean member-to-centroid distance. Lower is better.
pub fn davies_bouldin<P, M: Metric<P>>(points: &[P], assignments: &[usize], centroids: &[P], metric: &M) -> Result<f64> {
    let k = centroids.len();
    require_two_clusters(k)?;
    let members = cluster_members(assignments, k)?;
    let spread: Vec<f64> = members
        .iter()
        .enumerate()
        .map(|(l, idx)| idx.iter().map(|&i| metric.distance(&points[i], &centroids[l])).sum::<f64>() / idx.len() as f64)
        .collect();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let gap = metric.distance(&centroids[i], &centroids[j]);
            if gap == 0.0 {
                return Err(Error::DegenerateCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((spread[i] + spread[j]) / gap);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Smallest inter-cluster point distance over the largest intra-cluster
/// diameter. Larger is better.
pub fn dunn<P: Sync, M: Metric<P>>(points: &[P], assignments: &[usize], k: usize, metric: &M) -> Result<f64> {
    require_two_clusters(k)?;
    cluster_members(assignments, k)?;
    let (min_gap, max_diameter) = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut gap = f64::INFINITY;
            let mut diameter: f64 = 0.0;
            for j in i + 1..points.len() {
                let d = metric.distance(&points[i], &points[j]);
                if assignments[i] == assignments[j] {
                    diameter = diameter.max(d);
                } else {
                    gap = gap.min(d);
                }
            }
            (gap, diameter)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    if max_diameter == 0.0 {
        return Err(Error::ZeroDiameter);
    }
    Ok(min_gap / max_diameter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub score: f64,
    /// Points whose coefficient entered the average.
    pub evaluated: usize,
    /// Sampled points skipped because their own cluster is a singleton.
    pub skipped_singletons: usize,
    /// Clusters contributing to the outer average.
    pub clusters_used: usize,
}

/// Alpha-average Silhouette coefficient: from each cluster `l` a sorted
/// random subset of `floor(alpha |C_l|)` members is scored and the
/// per-cluster means are averaged. `a_i` excludes the point itself.
pub fn silhouette_alpha<P: Sync, M: Metric<P>>(
    points: &[P],
    assignments: &[usize],
    k: usize,
    metric: &M,
    alpha: f64,
    seed: u64,
) -> Result<SilhouetteReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    require_two_clusters(k)?;
    let members = cluster_members(assignments, k)?;
    let mut rng = rng::stream(seed, 0);
    let sampled: Vec<Vec<usize>> = members
        .iter()
        .map(|idx| {
            let take = (alpha * idx.len() as f64).floor() as usize;
            let mut picks: Vec<usize> = index::sample(&mut rng, idx.len(), take).into_iter().map(|t| idx[t]).collect();
            picks.sort_unstable();
            picks
        })
        .collect();

    let coefficient = |i: usize| -> Option<f64> {
        let own = assignments[i];
        if members[own].len() < 2 {
            return None;
        }
        let mut sums = vec![0.0; k];
        for (j, p) in points.iter().enumerate() {
            if j != i {
                sums[assignments[j]] += metric.distance(&points[i], p);
            }
        }
        let a = sums[own] / (members[own].len() - 1) as f64;
        let b = (0..k).filter(|&l| l != own).map(|l| sums[l] / members[l].len() as f64).fold(f64::INFINITY, f64::min);
        let scale = a.max(b);
        Some(if scale > 0.0 { (b - a) / scale } else { 0.0 })
    };

    let mut cluster_means = Vec::new();
    let (mut evaluated, mut skipped) = (0, 0);
    for picks in &sampled {
        let values: Vec<Option<f64>> = picks.par_iter().map(|&i| coefficient(i)).collect();
        let scored: Vec<f64> = values.iter().flatten().copied().collect();
        skipped += values.len() - scored.len();
        evaluated += scored.len();
        if !scored.is_empty() {
            cluster_means.push(scored.iter().sum::<f64>() / scored.len() as f64);
        }
    }
    if cluster_means.is_empty() {
        return Err(Error::ClusterTooSmall(0, 2));
    }
    Ok(SilhouetteReport {
        score: cluster_means.iter().sum::<f64>() / cluster_means.len() as f64,
        evaluated,
        skipped_singletons: skipped,
        clusters_used: cluster_means.len(),
    })
}
