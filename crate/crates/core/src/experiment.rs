//! End-to-end experiments: resolve an input stream, cluster it with one of
//! the three algorithms, score the result against a known schedule and
//! aggregate over seeded runs.

use std::ops::Range;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accuracy::{accuracy_scores, membership_vectors, point_memberships, AccuracyReport};
use crate::clustering::{mk_means, wk_means, Euclidean, KMeansConfig, Wasserstein, DEFAULT_P_MOMENTS};
use crate::error::{Error, Result};
use crate::hmm::{decode, fit_gaussian_hmm, window_majority, GaussianHmm, HmmFitConfig};
use crate::measures::{log_returns, measures_from_returns, EmpiricalMeasure, ReturnStream, WindowConfig};
use crate::rng;
use crate::synthetic::{
    build_schedule, reference_gbm, simulate_path, steps_for_years, LengthPolicy, ModelSpec, PathRecord, RegimeSchedule, STEPS_PER_YEAR,
};
use crate::validation::{
    between_cluster_mmd, davies_bouldin, dunn, silhouette_alpha, within_cluster_similarity, KernelConfig, MmdSamplingConfig,
    SilhouetteReport, SimilarityScore,
};
use crate::wasserstein::WassersteinOrder;

const RUN_TAG: u64 = 0x0072_756e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Wkmeans,
    Mkmeans,
    Hmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub years: f64,
    pub regimes: usize,
    pub length: LengthPolicy,
    pub model: ModelSpec,
    pub s0: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { years: 20.0, regimes: 10, length: LengthPolicy::Fixed { length: STEPS_PER_YEAR / 2 }, model: reference_gbm(), s0: 1.0 }
    }
}

impl SyntheticSpec {
    pub fn simulate(&self, seed: u64) -> Result<PathRecord> {
        let total = steps_for_years(self.years)?;
        let schedule = build_schedule(total, self.regimes, self.length, seed)?;
        simulate_path(&schedule, &self.model, self.s0, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationParams {
    pub kernel: KernelConfig,
    pub mmd: MmdSamplingConfig,
    pub silhouette_alpha: f64,
}

impl Default for ValidationParams {
    fn default() -> Self {
        Self { kernel: KernelConfig::default(), mmd: MmdSamplingConfig::default(), silhouette_alpha: 1.0 }
    }
}

/// Full description of an experiment. Per-run seeds are derived from
/// `seed` and override the seeds inside the algorithm settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputSource,
    pub window: WindowConfig,
    pub algorithm: Algorithm,
    pub kmeans: KMeansConfig,
    pub order: WassersteinOrder,
    pub p_moments: usize,
    pub hmm: HmmFitConfig,
    pub validation: ValidationParams,
    pub runs: usize,
    pub seed: u64,
    pub sweep_h1: Vec<usize>,
    /// Clustering file consumed by validation and scoring.
    pub clustering: Option<PathBuf>,
    /// Schedule file consumed by scoring.
    pub schedule: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: InputSource::Synthetic(SyntheticSpec::default()),
            window: WindowConfig { h1: 35, h2: 28 },
            algorithm: Algorithm::Wkmeans,
            kmeans: KMeansConfig::default(),
            order: WassersteinOrder::ONE,
            p_moments: DEFAULT_P_MOMENTS,
            hmm: HmmFitConfig::default(),
            validation: ValidationParams::default(),
            runs: 1,
            seed: 0,
            sweep_h1: (2..=11).map(|i| 7 * i).collect(),
            clustering: None,
            schedule: None,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.hmm.validate()?;
        self.validation.kernel.validate()?;
        self.validation.mmd.validate()?;
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be positive".into()));
        }
        if self.p_moments == 0 {
            return Err(Error::InvalidConfig("p_moments must be positive".into()));
        }
        if !(self.validation.silhouette_alpha > 0.0 && self.validation.silhouette_alpha <= 1.0) {
            return Err(Error::InvalidConfig("silhouette_alpha must lie in (0, 1]".into()));
        }
        if let Some(h1) = self.sweep_h1.iter().find(|&&h1| h1 < 2) {
            return Err(Error::InvalidConfig(format!("sweep window length {h1} is below 2")));
        }
        if let InputSource::Synthetic(spec) = &self.input {
            spec.model.validate()?;
            steps_for_years(spec.years)?;
        }
        Ok(())
    }

    /// Seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        rng::derive_seed(self.seed, RUN_TAG, index as u64)
    }

    pub fn synthetic(&self) -> Option<&SyntheticSpec> {
        match &self.input {
            InputSource::Synthetic(spec) => Some(spec),
            InputSource::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidSummary {
    pub mean: f64,
    pub variance: f64,
}

/// Algorithm-specific fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterDetail {
    Wkmeans {
        /// Sorted atoms of each barycenter.
        centroids: Vec<Vec<f64>>,
        variation_trace: Vec<f64>,
        loss_trace: Vec<f64>,
        iterations: usize,
        converged: bool,
    },
    Mkmeans {
        /// Centroids in standardized moment coordinates.
        centroids: Vec<Vec<f64>>,
        raw_centroids: Vec<Vec<f64>>,
        variation_trace: Vec<f64>,
        loss_trace: Vec<f64>,
        iterations: usize,
        converged: bool,
    },
    Hmm {
        model: GaussianHmm,
        log_likelihood_trace: Vec<f64>,
        converged: bool,
        /// Viterbi state of every return.
        point_labels: Vec<usize>,
    },
}

/// Output of clustering one return stream. Labels are 0-based and
/// canonical: label 0 has the lowest centroid variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub algorithm: Algorithm,
    pub window: WindowConfig,
    pub k: usize,
    pub n_returns: usize,
    pub windows: Vec<Range<usize>>,
    pub labels: Vec<usize>,
    pub centroids: Vec<CentroidSummary>,
    pub detail: ClusterDetail,
}

impl ClusterResult {
    pub fn memberships(&self) -> Result<Vec<Vec<usize>>> {
        membership_vectors(&self.windows, &self.labels, self.n_returns, self.k)
    }

    pub fn point_labels(&self) -> Option<&[usize]> {
        match &self.detail {
            ClusterDetail::Hmm { point_labels, .. } => Some(point_labels),
            _ => None,
        }
    }

    /// Window-level score, and per-return score for the HMM.
    pub fn score(&self, schedule: &RegimeSchedule) -> Result<(AccuracyReport, Option<AccuracyReport>)> {
        let windowed = accuracy_scores(&self.memberships()?, schedule)?;
        let point = match self.point_labels() {
            Some(labels) => Some(accuracy_scores(&point_memberships(labels, self.k)?, schedule)?),
            None => None,
        };
        Ok((windowed, point))
    }

    /// Raw window returns grouped by cluster label.
    pub fn cluster_windows(&self, returns: &ReturnStream) -> Vec<Vec<Vec<f64>>> {
        let mut groups = vec![Vec::new(); self.k];
        for (w, &l) in self.windows.iter().zip(&self.labels) {
            groups[l].push(returns.values()[w.clone()].to_vec());
        }
        groups
    }
}

/// Clusters the windows of `returns` with the configured algorithm.
pub fn cluster_returns(returns: &ReturnStream, cfg: &ExperimentConfig, seed: u64) -> Result<ClusterResult> {
    let (windows, measures) = measures_from_returns(returns, cfg.window)?;
    let kcfg = KMeansConfig { seed, ..cfg.kmeans };
    let k = kcfg.k;
    let summary = |pairs: Vec<(f64, f64)>| pairs.into_iter().map(|(mean, variance)| CentroidSummary { mean, variance }).collect();
    let (labels, centroids, detail) = match cfg.algorithm {
        Algorithm::Wkmeans => {
            let c = wk_means(&measures, &kcfg, cfg.order)?;
            let cents = summary(c.centroids.iter().map(|m| (m.mean(), m.variance())).collect());
            let detail = ClusterDetail::Wkmeans {
                centroids: c.centroids.iter().map(|m| m.atoms().to_vec()).collect(),
                variation_trace: c.variation_trace,
                loss_trace: c.loss_trace,
                iterations: c.iterations,
                converged: c.converged,
            };
            (c.assignments, cents, detail)
        }
        Algorithm::Mkmeans => {
            let m = mk_means(&measures, &kcfg, cfg.p_moments)?;
            let cents = match m.centroid_mean_variance() {
                Some(mv) => summary(mv),
                None => summary(m.raw_centroids().iter().map(|r| (r[0], f64::NAN)).collect()),
            };
            let raw_centroids = m.raw_centroids();
            let c = m.clustering;
            let detail = ClusterDetail::Mkmeans {
                centroids: c.centroids,
                raw_centroids,
                variation_trace: c.variation_trace,
                loss_trace: c.loss_trace,
                iterations: c.iterations,
                converged: c.converged,
            };
            (c.assignments, cents, detail)
        }
        Algorithm::Hmm => {
            let hcfg = HmmFitConfig { seed, ..cfg.hmm };
            let fit = fit_gaussian_hmm(returns.values(), k, &hcfg)?;
            let point_labels = decode(&fit.model, returns.values());
            let labels = window_majority(&point_labels, &windows, k)?;
            let cents = summary(fit.model.means.iter().copied().zip(fit.model.variances.iter().copied()).collect());
            let detail = ClusterDetail::Hmm {
                model: fit.model,
                log_likelihood_trace: fit.log_likelihood_trace,
                converged: fit.converged,
                point_labels,
            };
            (labels, cents, detail)
        }
    };
    Ok(ClusterResult { algorithm: cfg.algorithm, window: cfg.window, k, n_returns: returns.len(), windows, labels, centroids, detail })
}

/// Cluster quality indexes and MMD self-similarity scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub davies_bouldin: Option<f64>,
    pub dunn: Option<f64>,
    pub silhouette: Option<SilhouetteReport>,
    /// Errors from indexes that could not be computed.
    pub index_errors: Vec<String>,
    pub within: Vec<Option<SimilarityScore>>,
    /// Scores for every pair of clusters `(a, b)` with `a < b`.
    pub between: Vec<((usize, usize), SimilarityScore)>,
}

fn collect_index<T>(value: Result<T>, name: &str, errors: &mut Vec<String>) -> Option<T> {
    value.map_err(|e| errors.push(format!("{name}: {e}"))).ok()
}

/// Validates a clustering of `returns`. Indexes use the clustering's own
/// geometry: `W_p` on measures for WK-means and the HMM, Euclidean on
/// standardized moments for MK-means.
pub fn validate_clustering(returns: &ReturnStream, result: &ClusterResult, cfg: &ExperimentConfig, seed: u64) -> Result<ValidationReport> {
    let params = &cfg.validation;
    let mut errors = Vec::new();
    let (db, dn, sil) = match &result.detail {
        ClusterDetail::Mkmeans { centroids, .. } => {
            let (_, measures) = measures_from_returns(returns, result.window)?;
            let raw: Vec<Vec<f64>> = measures.iter().map(|m| crate::measures::moment_map(m, cfg.p_moments)).collect();
            let points = crate::measures::standardize_columns(&raw);
            (
                collect_index(davies_bouldin(&points, &result.labels, centroids, &Euclidean), "davies_bouldin", &mut errors),
                collect_index(dunn(&points, &result.labels, result.k, &Euclidean), "dunn", &mut errors),
                collect_index(
                    silhouette_alpha(&points, &result.labels, result.k, &Euclidean, params.silhouette_alpha, seed),
                    "silhouette",
                    &mut errors,
                ),
            )
        }
        detail => {
            let (_, measures) = measures_from_returns(returns, result.window)?;
            let metric = Wasserstein(cfg.order);
            let centroids: Vec<EmpiricalMeasure> = match detail {
                ClusterDetail::Wkmeans { centroids, .. } => {
                    centroids.iter().map(|c| EmpiricalMeasure::from_values(c)).collect::<Result<_>>()?
                }
                _ => {
                    let groups: Vec<Vec<&EmpiricalMeasure>> = (0..result.k)
                        .map(|l| measures.iter().zip(&result.labels).filter(|(_, &a)| a == l).map(|(m, _)| m).collect())
                        .collect();
                    groups
                        .iter()
                        .enumerate()
                        .map(|(l, g)| {
                            if g.is_empty() {
                                Err(Error::EmptyCluster(l))
                            } else {
                                crate::wasserstein::wasserstein_barycenter(g, cfg.order)
                            }
                        })
                        .collect::<Result<_>>()
                        .unwrap_or_default()
                }
            };
            let db = if centroids.len() == result.k {
                collect_index(davies_bouldin(&measures, &result.labels, &centroids, &metric), "davies_bouldin", &mut errors)
            } else {
                errors.push("davies_bouldin: a cluster is empty".into());
                None
            };
            (
                db,
                collect_index(dunn(&measures, &result.labels, result.k, &metric), "dunn", &mut errors),
                collect_index(
                    silhouette_alpha(&measures, &result.labels, result.k, &metric, params.silhouette_alpha, seed),
                    "silhouette",
                    &mut errors,
                ),
            )
        }
    };

    let groups = result.cluster_windows(returns);
    let mmd = MmdSamplingConfig { seed, ..params.mmd };
    let within = groups
        .iter()
        .enumerate()
        .map(|(l, g)| {
            let s = within_cluster_similarity(g, &mmd, &params.kernel);
            collect_index(s, &format!("within[{l}]"), &mut errors)
        })
        .collect();
    let mut between = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            if let Some(s) =
                collect_index(between_cluster_mmd(&groups[a], &groups[b], &mmd, &params.kernel), &format!("between[{a},{b}]"), &mut errors)
            {
                between.push(((a, b), s));
            }
        }
    }
    Ok(ValidationReport { davies_bouldin: db, dunn: dn, silhouette: sil, index_errors: errors, within, between })
}

/// One synthetic run: path, clustering and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub run: usize,
    pub seed: u64,
    pub report: AccuracyReport,
    /// Per-return score, reported for the HMM.
    pub point_report: Option<AccuracyReport>,
    pub centroids: Vec<CentroidSummary>,
}

/// Simulates run `index` of a synthetic experiment and clusters it.
pub fn simulate_and_cluster(cfg: &ExperimentConfig, index: usize) -> Result<(PathRecord, ReturnStream, ClusterResult)> {
    let spec = cfg.synthetic().ok_or_else(|| Error::InvalidConfig("experiment needs a synthetic input".into()))?;
    let seed = cfg.run_seed(index);
    let path = spec.simulate(seed)?;
    let returns = log_returns(&path.prices);
    let result = cluster_returns(&returns, cfg, seed)?;
    Ok((path, returns, result))
}

pub fn run_trial(cfg: &ExperimentConfig, index: usize) -> Result<TrialOutcome> {
    let (path, _, result) = simulate_and_cluster(cfg, index)?;
    let (report, point_report) = result.score(&path.meta.schedule)?;
    Ok(TrialOutcome { run: index, seed: cfg.run_seed(index), report, point_report, centroids: result.centroids })
}

/// Runs `cfg.runs` independent trials concurrently.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    (0..cfg.runs).into_par_iter().map(|i| run_trial(cfg, i)).collect()
}

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl Summary {
    /// `None` when there are no values. The half-width uses the sample
    /// standard deviation and is 0 for a single value.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, ci95, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub ta: Option<Summary>,
    pub rons: Option<Summary>,
    pub rofs: Option<Summary>,
}

impl ScoreSummary {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a AccuracyReport> + Clone) -> Self {
        let collect = |f: fn(&AccuracyReport) -> Option<f64>| Summary::of(&reports.clone().into_iter().filter_map(f).collect::<Vec<_>>());
        Self { ta: collect(|r| Some(r.ta)), rons: collect(|r| r.rons), rofs: collect(|r| r.rofs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h1: usize,
    pub h2: usize,
    pub scores: ScoreSummary,
    pub trials: Vec<TrialOutcome>,
}

/// Accuracy over window lengths `cfg.sweep_h1` with `h2 = floor(3 h1 / 4)`.
/// Each length reuses the same run seeds, so every length sees the same
/// paths.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.sweep_h1
        .par_iter()
        .map(|&h1| {
            let window = WindowConfig::new(h1, 3 * h1 / 4)?;
            let run_cfg = ExperimentConfig { window, ..cfg.clone() };
            let trials = run_trials(&run_cfg)?;
            let scores = ScoreSummary::of(trials.iter().map(|t| &t.report));
            Ok(SweepRow { h1, h2: window.h2, scores, trials })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::reference_merton;

    fn small(algorithm: Algorithm) -> ExperimentConfig {
        ExperimentConfig {
            input: InputSource::Synthetic(SyntheticSpec { years: 4.0, regimes: 2, ..SyntheticSpec::default() }),
            algorithm,
            runs: 2,
            seed: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_and_defaults() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"algorithm":"hmm","runs":3}"#).unwrap();
        assert_eq!(partial.algorithm, Algorithm::Hmm);
        assert_eq!(partial.window, WindowConfig { h1: 35, h2: 28 });
        assert_eq!(partial.sweep_h1, vec![14, 21, 28, 35, 42, 49, 56, 63, 70, 77]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"algorithm":"kmedoids"}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"windw":{"h1":3,"h2":1}}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let cfg = ExperimentConfig { window: WindowConfig { h1: 5, h2: 5 }, ..ExperimentConfig::default() };
        assert!(cfg.validate().unwrap_err().is_input_error());
        let cfg = ExperimentConfig { runs: 0, ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trials_for_each_algorithm() {
        for algorithm in [Algorithm::Wkmeans, Algorithm::Mkmeans, Algorithm::Hmm] {
            let cfg = small(algorithm);
            let trials = run_trials(&cfg).unwrap();
            assert_eq!(trials.len(), 2);
            for t in &trials {
                assert!((0.0..=1.0).contains(&t.report.ta));
                assert_eq!(t.point_report.is_some(), algorithm == Algorithm::Hmm);
                assert!(t.centroids[0].variance <= t.centroids[1].variance);
            }
            assert_eq!(trials, run_trials(&cfg).unwrap());
        }
    }

    #[test]
    fn validation_report_on_synthetic_run() {
        for algorithm in [Algorithm::Wkmeans, Algorithm::Mkmeans, Algorithm::Hmm] {
            let mut cfg = small(algorithm);
            cfg.validation.mmd.n_pairs = 50;
            cfg.validation.silhouette_alpha = 0.2;
            let (_, returns, result) = simulate_and_cluster(&cfg, 0).unwrap();
            let report = validate_clustering(&returns, &result, &cfg, 1).unwrap();
            assert_eq!(report.within.len(), 2);
            assert!(report.davies_bouldin.is_some() || !report.index_errors.is_empty());
        }
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[0.5, 0.7, 0.9]).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-15);
        assert!((s.ci95 - 1.96 * 0.2 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(Summary::of(&[0.4]).unwrap().ci95, 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn sweep_single_length_matches_trials() {
        let mut cfg = small(Algorithm::Wkmeans);
        cfg.input = InputSource::Synthetic(SyntheticSpec { years: 3.0, regimes: 2, model: reference_merton(), ..SyntheticSpec::default() });
        cfg.sweep_h1 = vec![28];
        let rows = sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].h2, 21);
        let direct = run_trials(&ExperimentConfig { window: WindowConfig { h1: 28, h2: 21 }, ..cfg }).unwrap();
        assert_eq!(rows[0].trials, direct);
    }
}
