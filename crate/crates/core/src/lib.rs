//! Market regime clustering on empirical return distributions.
//!
//! Return series are lifted into overlapping windows, each window becomes
//! an empirical measure, and the measures are clustered with Wasserstein
//! k-means. Moment k-means and a Gaussian HMM serve as baselines, MMD
//! scores and classic indexes validate clusterings, and synthetic
//! regime-switching paths provide ground truth for accuracy scores.

pub mod accuracy;
pub mod clustering;
pub mod error;
pub mod experiment;
pub mod hmm;
pub mod io;
pub mod measures;
pub mod rng;
pub mod synthetic;
pub mod validation;
pub mod wasserstein;

pub use accuracy::{accuracy_scores, colouring_series, membership_vectors, AccuracyReport, MembershipVector};
pub use clustering::{kmeans_generic, mk_means, wk_means, Clustering, KMeansConfig, MomentClustering};
pub use error::{Error, Result};
pub use experiment::{Algorithm, ClusterResult, ExperimentConfig, InputSource, SyntheticSpec};
pub use hmm::{decode, fit_gaussian_hmm, GaussianHmm, HmmFitConfig};
pub use measures::{lift, log_returns, EmpiricalMeasure, PriceStream, ReturnStream, WindowConfig};
pub use synthetic::{GbmParams, MertonParams, ModelParams, ModelSpec, PathRecord, RegimeSchedule};
pub use validation::{KernelConfig, MmdSamplingConfig};
pub use wasserstein::{wasserstein_barycenter, wasserstein_distance, WassersteinOrder};
