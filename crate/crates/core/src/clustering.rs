//! Generic k-means over any point type with a metric and an aggregator,
//! specialised to Wasserstein k-means (WK-means) on empirical measures and
//! moment k-means (MK-means) on standardized raw-moment vectors.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{moment_map, population_mean_variance, ColumnScaling, EmpiricalMeasure};
use crate::rng;
use crate::wasserstein::{equal_count_pow, wasserstein_barycenter, wasserstein_pow, WassersteinOrder};

const KMEANS_SEED_TAG: u64 = 0x6b6d_6561_6e73;

/// A distance on points of type `P`.
///
/// `cost` is `distance^exponent`; assignment and the cluster-variation
/// functionals work with it directly so that no roots are taken in the
/// inner loops. The exponent is the power the matching aggregator
/// minimizes: 2 for Euclidean means, `p` for Wasserstein barycenters.
pub trait Metric<P>: Sync {
    fn distance(&self, a: &P, b: &P) -> f64;

    fn exponent(&self) -> f64;

    fn cost(&self, a: &P, b: &P) -> f64 {
        self.distance(a, b).powf(self.exponent())
    }
}

/// Maps a non-empty set of cluster members to a central element.
pub trait Aggregator<P>: Sync {
    fn aggregate(&self, members: &[&P]) -> Result<P>;
}

/// Euclidean distance with coordinate-wise mean aggregation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Metric<Vec<f64>> for Euclidean {
    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        self.cost(a, b).sqrt()
    }

    fn exponent(&self) -> f64 {
        2.0
    }

    fn cost(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

impl Aggregator<Vec<f64>> for Euclidean {
    fn aggregate(&self, members: &[&Vec<f64>]) -> Result<Vec<f64>> {
        let first = members.first().ok_or(Error::EmptyCluster(0))?;
        let mut mean = vec![0.0; first.len()];
        for m in members {
            if m.len() != mean.len() {
                return Err(Error::LengthMismatch(mean.len(), m.len()));
            }
            for (acc, x) in mean.iter_mut().zip(m.iter()) {
                *acc += x;
            }
        }
        let n = members.len() as f64;
        mean.iter_mut().for_each(|x| *x /= n);
        Ok(mean)
    }
}

/// `W_p` between empirical measures, aggregated by the `W_p` barycenter.
#[derive(Debug, Clone, Copy)]
pub struct Wasserstein(pub WassersteinOrder);

impl Metric<EmpiricalMeasure> for Wasserstein {
    fn distance(&self, a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
        self.0.root(self.cost(a, b))
    }

    fn exponent(&self) -> f64 {
        self.0.get()
    }

    fn cost(&self, a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
        if a.len() == b.len() && !a.is_empty() {
            equal_count_pow(a.atoms(), b.atoms(), self.0)
        } else {
            wasserstein_pow(a, b, self.0).unwrap_or(f64::NAN)
        }
    }
}

impl Aggregator<EmpiricalMeasure> for Wasserstein {
    fn aggregate(&self, members: &[&EmpiricalMeasure]) -> Result<EmpiricalMeasure> {
        wasserstein_barycenter(members, self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `k` distinct points drawn uniformly.
    #[default]
    UniformSample,
    /// First centroid uniform, then repeatedly the point farthest from the
    /// centroids chosen so far.
    FarthestFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub init: Init,
    /// Independent runs; the one with the lowest final total-cluster
    /// variation is returned.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 2, tolerance: 1e-6, max_iterations: 300, seed: 0, init: Init::UniformSample, restarts: 5 }
    }
}

impl KMeansConfig {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.k > n_points {
            return Err(Error::KTooLarge { k: self.k, n: n_points });
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("max_iterations and restarts must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a k-means run: centroids, 0-based assignments and the
/// per-iteration traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering<P> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<P>,
    /// Stopping loss `sum_i d(c_i^{n-1}, c_i^n)` per iteration.
    pub loss_trace: Vec<f64>,
    /// Total-cluster variation after each iteration's centroid update.
    pub variation_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart that produced this result.
    pub restart: usize,
    /// Number of empty-cluster repairs performed during the run.
    pub repairs: usize,
}

impl<P> Clustering<P> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Labels in `1..=k`.
    pub fn labels(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a + 1).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Member indices of each cluster, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k()];
        for (i, &a) in self.assignments.iter().enumerate() {
            members[a].push(i);
        }
        members
    }

    /// Reorders clusters so that keys are ascending; label 0 gets the
    /// smallest key. Ties keep their current order.
    pub fn relabel_by(&mut self, keys: &[f64])
    where
        P: Clone,
    {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
        let mut new_label = vec![0; self.k()];
        for (new, &old) in order.iter().enumerate() {
            new_label[old] = new;
        }
        self.centroids = order.iter().map(|&old| self.centroids[old].clone()).collect();
        for a in self.assignments.iter_mut() {
            *a = new_label[*a];
        }
    }
}

/// Sum of `cost(member, centroid)` over a cluster: squared norms for the
/// Euclidean space, `W_p^p` for measures.
pub fn within_cluster_variation<P, M: Metric<P>>(members: &[&P], centroid: &P, metric: &M) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyCluster(0));
    }
    Ok(members.iter().map(|m| metric.cost(m, centroid)).sum())
}

pub fn total_cluster_variation<P, M: Metric<P>>(points: &[P], assignments: &[usize], centroids: &[P], metric: &M) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| metric.cost(p, &centroids[a])).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its cost.
fn nearest<P, M: Metric<P>>(point: &P, centroids: &[P], metric: &M) -> (usize, f64) {
    let mut best = (0, metric.cost(point, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let cost = metric.cost(point, c);
        if cost < best.1 {
            best = (j, cost);
        }
    }
    best
}

/// Runs k-means with `cfg.restarts` seeded restarts and returns the run
/// with the smallest final total-cluster variation.
pub fn kmeans_generic<P, S>(points: &[P], cfg: &KMeansConfig, space: &S) -> Result<Clustering<P>>
where
    P: Clone + Send + Sync,
    S: Metric<P> + Aggregator<P>,
{
    if points.is_empty() {
        return Err(Error::InvalidConfig("no points to cluster".into()));
    }
    cfg.validate(points.len())?;
    if points.iter().any(|p| !space.cost(p, p).is_finite()) {
        return Err(Error::NonFinite("k-means input point"));
    }
    let runs: Vec<Result<Clustering<P>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(cfg.seed, KMEANS_SEED_TAG, r as u64);
            single_run(points, cfg, space, seed).map(|mut c| {
                c.restart = r;
                c
            })
        })
        .collect();
    let mut best: Option<Clustering<P>> = None;
    for run in runs {
        let run = run?;
        let better = match &best {
            None => true,
            Some(b) => final_variation(&run) < final_variation(b),
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn final_variation<P>(c: &Clustering<P>) -> f64 {
    c.variation_trace.last().copied().unwrap_or(f64::INFINITY)
}

fn initial_centroids<P, M>(points: &[P], k: usize, init: Init, metric: &M, seed: u64) -> Vec<P>
where
    P: Clone + Sync,
    M: Metric<P>,
{
    let mut rng = rng::stream(seed, 0);
    match init {
        Init::UniformSample => index::sample(&mut rng, points.len(), k).into_iter().map(|i| points[i].clone()).collect(),
        Init::FarthestFirst => {
            let first = rng.gen_range(0..points.len());
            let mut chosen = vec![points[first].clone()];
            let mut min_cost: Vec<f64> = points.par_iter().map(|p| metric.cost(p, &chosen[0])).collect();
            while chosen.len() < k {
                let mut far = 0;
                for (i, &c) in min_cost.iter().enumerate() {
                    if c > min_cost[far] {
                        far = i;
                    }
                }
                chosen.push(points[far].clone());
                let newest = chosen.last().expect("just pushed");
                min_cost.par_iter_mut().zip(points.par_iter()).for_each(|(m, p)| *m = m.min(metric.cost(p, newest)));
            }
            chosen
        }
    }
}

/// Moves the worst-fitting points into empty clusters. Donors are taken
/// only from clusters with at least two members.
fn repair_empty_clusters(assignments: &mut [usize], costs: &mut [f64], k: usize) -> usize {
    let mut repairs = 0;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repairs;
        };
        let mut donor: Option<usize> = None;
        for (i, &a) in assignments.iter().enumerate() {
            if sizes[a] >= 2 && donor.map_or(true, |d| costs[i] > costs[d]) {
                donor = Some(i);
            }
        }
        let donor = donor.expect("k <= n guarantees a cluster with two members");
        assignments[donor] = empty;
        costs[donor] = 0.0;
        repairs += 1;
    }
}

fn single_run<P, S>(points: &[P], cfg: &KMeansConfig, space: &S, seed: u64) -> Result<Clustering<P>>
where
    P: Clone + Send + Sync,
    S: Metric<P> + Aggregator<P>,
{
    let k = cfg.k;
    let mut centroids = initial_centroids(points, k, cfg.init, space, seed);
    let mut assignments = vec![0usize; points.len()];
    let mut loss_trace = Vec::new();
    let mut variation_trace = Vec::new();
    let mut converged = false;
    let mut repairs = 0;

    for _ in 0..cfg.max_iterations {
        let nearest: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centroids, space)).collect();
        let mut costs: Vec<f64> = Vec::with_capacity(points.len());
        for (slot, (label, cost)) in assignments.iter_mut().zip(nearest) {
            *slot = label;
            costs.push(cost);
        }
        repairs += repair_empty_clusters(&mut assignments, &mut costs, k);

        let mut members: Vec<Vec<&P>> = vec![Vec::new(); k];
        for (p, &a) in points.iter().zip(&assignments) {
            members[a].push(p);
        }
        let new_centroids = members.par_iter().map(|m| space.aggregate(m)).collect::<Result<Vec<P>>>()?;

        let loss: f64 = centroids.iter().zip(&new_centroids).map(|(old, new)| space.distance(old, new)).sum();
        let variation = total_cluster_variation(points, &assignments, &new_centroids, space);
        if !loss.is_finite() || !variation.is_finite() {
            return Err(Error::NonFinite("k-means iteration"));
        }
        loss_trace.push(loss);
        variation_trace.push(variation);
        centroids = new_centroids;
        if loss < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(Clustering { assignments, centroids, iterations: loss_trace.len(), loss_trace, variation_trace, converged, restart: 0, repairs })
}

/// WK-means: k-means on empirical measures under `W_p` with barycenter
/// aggregation. Clusters are relabelled by ascending centroid variance, so
/// label 0 is the calmest regime.
pub fn wk_means(measures: &[EmpiricalMeasure], cfg: &KMeansConfig, order: WassersteinOrder) -> Result<Clustering<EmpiricalMeasure>> {
    if let Some(first) = measures.first() {
        if let Some(other) = measures.iter().find(|m| m.len() != first.len()) {
            return Err(Error::UnequalAtomCounts(first.len(), other.len()));
        }
    }
    if order != WassersteinOrder::ONE && order != WassersteinOrder::TWO {
        return Err(Error::UnsupportedOrder(order.get()));
    }
    let mut clustering = kmeans_generic(measures, cfg, &Wasserstein(order))?;
    let keys: Vec<f64> = clustering.centroids.iter().map(EmpiricalMeasure::variance).collect();
    clustering.relabel_by(&keys);
    Ok(clustering)
}

/// MK-means result: the clustering of standardized moment vectors plus the
/// scaling needed to map centroids back to raw moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentClustering {
    pub clustering: Clustering<Vec<f64>>,
    pub scaling: ColumnScaling,
    pub p_moments: usize,
}

impl MomentClustering {
    /// Centroids in raw-moment coordinates, `E[x^n] / n!`.
    pub fn raw_centroids(&self) -> Vec<Vec<f64>> {
        self.clustering.centroids.iter().map(|c| self.scaling.invert(c)).collect()
    }

    /// `(mean, variance)` implied by each centroid's first two raw moments.
    /// `None` when fewer than two moments are used.
    pub fn centroid_mean_variance(&self) -> Option<Vec<(f64, f64)>> {
        (self.p_moments >= 2).then(|| self.raw_centroids().iter().map(|raw| (raw[0], 2.0 * raw[1] - raw[0] * raw[0])).collect())
    }
}

/// Default number of raw moments used by MK-means.
pub const DEFAULT_P_MOMENTS: usize = 4;

/// MK-means: raw-moment map, column standardization, then Euclidean
/// k-means. Clusters are relabelled by ascending implied centroid variance
/// (mean member variance when `p_moments == 1`).
pub fn mk_means(measures: &[EmpiricalMeasure], cfg: &KMeansConfig, p_moments: usize) -> Result<MomentClustering> {
    if p_moments == 0 {
        return Err(Error::InvalidConfig("p_moments must be at least 1".into()));
    }
    let raw: Vec<Vec<f64>> = measures.iter().map(|m| moment_map(m, p_moments)).collect();
    let scaling = ColumnScaling::fit(&raw);
    let points: Vec<Vec<f64>> = raw.iter().map(|r| scaling.apply(r)).collect();
    let clustering = kmeans_generic(&points, cfg, &Euclidean)?;
    let mut result = MomentClustering { clustering, scaling, p_moments };
    let keys: Vec<f64> = match result.centroid_mean_variance() {
        Some(mv) => mv.into_iter().map(|(_, v)| v).collect(),
        None => result
            .clustering
            .members()
            .iter()
            .map(|idx| {
                let vars: Vec<f64> = idx.iter().map(|&i| measures[i].variance()).collect();
                population_mean_variance(&vars).0
            })
            .collect(),
    };
    result.clustering.relabel_by(&keys);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cfg(k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig { k, seed, ..KMeansConfig::default() }
    }

    fn blobs(seed: u64, per_blob: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = rng::stream(seed, 0);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for (label, center) in [(0usize, -5.0), (1usize, 5.0)] {
            for _ in 0..per_blob {
                points.push(vec![center + noise.sample(&mut rng), noise.sample(&mut rng)]);
                truth.push(label);
            }
        }
        (points, truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        let direct = a.iter().zip(b).all(|(x, y)| x == y);
        let swapped = a.iter().zip(b).all(|(x, y)| *x == 1 - *y);
        direct || swapped
    }

    #[test]
    fn k_equals_n_gives_zero_loss_at_first_iteration() {
        let points = vec![vec![0.0], vec![1.0], vec![5.0], vec![-2.0]];
        let c = kmeans_generic(&points, &cfg(4, 3), &Euclidean).unwrap();
        assert_eq!(c.iterations, 1);
        assert_eq!(c.loss_trace, vec![0.0]);
        assert_eq!(c.variation_trace, vec![0.0]);
        let mut sorted = c.assignments.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let points = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 3.0]];
        let c = kmeans_generic(&points, &cfg(1, 0), &Euclidean).unwrap();
        assert_eq!(c.centroids[0], vec![3.0, 1.0]);
        assert!(c.converged);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (points, truth) = blobs(5, 50, 0.1);
        let c = kmeans_generic(&points, &cfg(2, 9), &Euclidean).unwrap();
        assert!(same_partition(&c.assignments, &truth));
    }

    #[test]
    fn config_errors() {
        let points = vec![vec![0.0], vec![1.0]];
        assert_eq!(kmeans_generic(&points, &cfg(3, 0), &Euclidean).unwrap_err(), Error::KTooLarge { k: 3, n: 2 });
        let bad = vec![vec![0.0], vec![f64::NAN]];
        assert!(matches!(kmeans_generic(&bad, &cfg(1, 0), &Euclidean), Err(Error::NonFinite(_))));
        let zero_tol = KMeansConfig { tolerance: 0.0, ..cfg(1, 0) };
        assert!(kmeans_generic(&points, &zero_tol, &Euclidean).is_err());
    }

    #[test]
    fn farthest_first_picks_spread_centroids() {
        let points = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1], vec![20.0]];
        let c = KMeansConfig { init: Init::FarthestFirst, restarts: 1, ..cfg(3, 1) };
        let result = kmeans_generic(&points, &c, &Euclidean).unwrap();
        assert_eq!(result.cluster_sizes().iter().filter(|&&s| s > 0).count(), 3);
        assert!(result.variation_trace.last().unwrap() < &0.011);
    }

    #[test]
    fn repair_fills_every_empty_cluster() {
        let mut assignments = vec![0, 0, 0, 0, 1];
        let mut costs = vec![0.1, 3.0, 0.5, 2.0, 0.0];
        let repairs = repair_empty_clusters(&mut assignments, &mut costs, 4);
        assert_eq!(repairs, 2);
        assert_eq!(assignments, vec![0, 2, 0, 3, 1]);
    }

    #[test]
    fn duplicate_points_never_leave_empty_clusters() {
        let points = vec![vec![1.0]; 6];
        for seed in 0..10 {
            let c = kmeans_generic(&points, &cfg(3, seed), &Euclidean).unwrap();
            assert!(c.cluster_sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn within_cluster_variation_examples() {
        let a = vec![0.0];
        assert_eq!(within_cluster_variation(&[&a], &a, &Euclidean).unwrap(), 0.0);
        let (p, q, c) = (vec![0.0], vec![2.0], vec![1.0]);
        assert_eq!(within_cluster_variation(&[&p, &q], &c, &Euclidean).unwrap(), 2.0);
        assert_eq!(within_cluster_variation::<Vec<f64>, _>(&[], &c, &Euclidean), Err(Error::EmptyCluster(0)));

        let mut rng = rng::stream(4, 4);
        let xs: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
        let refs: Vec<&Vec<f64>> = xs.iter().collect();
        let mean = Euclidean.aggregate(&refs).unwrap();
        let direct: f64 = xs.iter().map(|x| (x[0] - mean[0]).powi(2)).sum();
        assert!((within_cluster_variation(&refs, &mean, &Euclidean).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn total_variation_special_cases() {
        let points = vec![vec![0.0], vec![1.0], vec![4.0]];
        let c = kmeans_generic(&points, &cfg(3, 2), &Euclidean).unwrap();
        assert_eq!(total_cluster_variation(&points, &c.assignments, &c.centroids, &Euclidean), 0.0);
        let one = kmeans_generic(&points, &cfg(1, 2), &Euclidean).unwrap();
        let refs: Vec<&Vec<f64>> = points.iter().collect();
        assert_eq!(
            total_cluster_variation(&points, &one.assignments, &one.centroids, &Euclidean),
            within_cluster_variation(&refs, &one.centroids[0], &Euclidean).unwrap()
        );
    }

    fn normal_measures(rng: &mut impl Rng, count: usize, atoms: usize, sd: f64) -> Vec<EmpiricalMeasure> {
        let dist = Normal::new(0.0, sd).unwrap();
        (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..atoms).map(|_| dist.sample(rng)).collect();
                EmpiricalMeasure::from_values(&v).unwrap()
            })
            .collect()
    }

    #[test]
    fn wk_means_identical_measures() {
        let m = EmpiricalMeasure::from_values(&[0.1, -0.2, 0.3]).unwrap();
        let measures = vec![m.clone(); 5];
        let c = wk_means(&measures, &cfg(1, 0), WassersteinOrder::ONE).unwrap();
        assert_eq!(c.centroids[0], m);
        assert_eq!(c.iterations, 1);
        assert!(c.converged);
    }

    #[test]
    fn wk_means_separates_variance_groups() {
        let mut rng = rng::stream(31, 0);
        let mut measures = normal_measures(&mut rng, 20, 50, 0.01);
        measures.extend(normal_measures(&mut rng, 20, 50, 0.1));
        let truth: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        for order in [WassersteinOrder::ONE, WassersteinOrder::TWO] {
            let c = wk_means(&measures, &cfg(2, 1), order).unwrap();
            // canonical labelling puts the low-variance group first
            assert_eq!(c.assignments, truth);
        }
    }

    #[test]
    fn wk_means_rejects_ragged_input() {
        let measures = vec![EmpiricalMeasure::from_values(&[0.0, 1.0]).unwrap(), EmpiricalMeasure::from_values(&[0.0]).unwrap()];
        assert_eq!(wk_means(&measures, &cfg(1, 0), WassersteinOrder::ONE).unwrap_err(), Error::UnequalAtomCounts(2, 1));
    }

    #[test]
    fn mk_means_examples() {
        let m = EmpiricalMeasure::from_values(&[0.1, 0.2]).unwrap();
        let c = mk_means(&vec![m; 4], &cfg(1, 0), 3).unwrap();
        assert!(c.clustering.converged);
        assert_eq!(c.clustering.centroids[0], vec![0.0; 3]);

        let mut rng = rng::stream(8, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut measures = Vec::new();
        for shift in [0.0, 10.0] {
            for _ in 0..15 {
                let v: Vec<f64> = (0..30).map(|_| shift + noise.sample(&mut rng)).collect();
                measures.push(EmpiricalMeasure::from_values(&v).unwrap());
            }
        }
        let truth: Vec<usize> = (0..30).map(|i| usize::from(i >= 15)).collect();
        let c = mk_means(&measures, &cfg(2, 4), 1).unwrap();
        assert!(same_partition(&c.clustering.assignments, &truth));
    }

    #[test]
    fn mk_means_centroid_moments_round_trip() {
        let mut rng = rng::stream(12, 0);
        let measures = normal_measures(&mut rng, 30, 20, 0.5);
        let c = mk_means(&measures, &cfg(1, 0), 2).unwrap();
        let (mean, var) = c.centroid_mean_variance().unwrap()[0];
        let pooled: Vec<f64> = measures.iter().flat_map(|m| m.atoms().to_vec()).collect();
        let (pm, pv) = population_mean_variance(&pooled);
        assert!((mean - pm).abs() < 1e-12);
        assert!((var - pv).abs() < 1e-12);
    }

    #[test]
    fn relabel_sorts_by_key() {
        let mut c = Clustering {
            assignments: vec![0, 1, 2, 1],
            centroids: vec![vec![3.0], vec![1.0], vec![2.0]],
            loss_trace: vec![],
            variation_trace: vec![],
            iterations: 0,
            converged: true,
            restart: 0,
            repairs: 0,
        };
        c.relabel_by(&[3.0, 1.0, 2.0]);
        assert_eq!(c.centroids, vec![vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(c.assignments, vec![2, 0, 1, 0]);
        assert_eq!(c.labels(), vec![3, 1, 2, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn variation_is_monotone_and_runs_are_deterministic(seed in any::<u64>(), k in 1usize..5) {
            let mut rng = rng::stream(seed, 1);
            let points: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
            let config = cfg(k, seed);
            let a = kmeans_generic(&points, &config, &Euclidean).unwrap();
            let b = kmeans_generic(&points, &config, &Euclidean).unwrap();
            prop_assert_eq!(&a, &b);
            for w in a.variation_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10);
            }
            prop_assert!(a.cluster_sizes().iter().all(|&s| s > 0));
        }

        #[test]
        fn mk_means_absorbs_column_rescaling(seed in any::<u64>(), scale in 0.1f64..50.0, shift in -5f64..5.0) {
            let mut rng = rng::stream(seed, 2);
            let points: Vec<Vec<f64>> = (0..30)
                .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let rescaled: Vec<Vec<f64>> = points.iter().map(|p| vec![p[0] * scale + shift, p[1], p[2]]).collect();
            let standardize = |rows: &[Vec<f64>]| crate::measures::standardize_columns(rows);
            let config = cfg(3, seed);
            let a = kmeans_generic(&standardize(&points), &config, &Euclidean).unwrap();
            let b = kmeans_generic(&standardize(&rescaled), &config, &Euclidean).unwrap();
            prop_assert_eq!(a.assignments, b.assignments);
        }
    }
}
