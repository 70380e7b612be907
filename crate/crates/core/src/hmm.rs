//! Gaussian hidden Markov model on a return series: Baum-Welch fitting
//! with scaled forward-backward recursions and Viterbi decoding.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::population_mean_variance;
use crate::rng;

const HMM_SEED_TAG: u64 = 0x0068_6d6d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix, `transition[i][j] = P(j | i)`.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmFitConfig {
    pub max_em_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub variance_floor: f64,
    /// Restart 0 starts from the quantile split; later restarts jitter it.
    pub restarts: usize,
}

impl Default for HmmFitConfig {
    fn default() -> Self {
        Self { max_em_iterations: 200, tolerance: 1e-6, seed: 0, variance_floor: 1e-12, restarts: 1 }
    }
}

impl HmmFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_em_iterations == 0
            || self.restarts == 0
            || self.tolerance.is_nan()
            || self.tolerance <= 0.0
            || self.variance_floor.is_nan()
            || self.variance_floor <= 0.0
        {
            return Err(Error::InvalidConfig(format!("HMM settings must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmFit {
    pub model: GaussianHmm,
    /// Log-likelihood of the parameters entering each EM iteration, followed
    /// by that of the final parameters.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    pub restart: usize,
    /// States whose variance hit the floor at some iteration.
    pub floored_states: Vec<usize>,
}

impl GaussianHmm {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    fn log_emissions(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let consts: Vec<(f64, f64, f64)> =
            self.means.iter().zip(&self.variances).map(|(&m, &v)| (m, 1.0 / (2.0 * v), -0.5 * (2.0 * PI * v).ln())).collect();
        x.par_iter().map(|&xt| consts.iter().map(|&(m, inv2v, c)| c - (xt - m) * (xt - m) * inv2v).collect()).collect()
    }

    /// Reorders states by ascending emission variance.
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| self.variances[a].total_cmp(&self.variances[b]).then(a.cmp(&b)));
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        self.initial = pick(&self.initial);
        self.means = pick(&self.means);
        self.variances = pick(&self.variances);
        self.transition = order.iter().map(|&i| pick(&self.transition[i])).collect();
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let stochastic =
            |row: &[f64]| row.len() == k && row.iter().all(|p| (0.0..=1.0).contains(p)) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-10;
        if k == 0
            || self.variances.len() != k
            || !stochastic(&self.initial)
            || self.transition.len() != k
            || !self.transition.iter().all(|r| stochastic(r))
            || !self.variances.iter().all(|v| *v > 0.0 && v.is_finite())
            || !self.means.iter().all(|m| m.is_finite())
        {
            return Err(Error::InvalidConfig("malformed Gaussian HMM parameters".into()));
        }
        Ok(())
    }
}

struct ForwardBackward {
    gamma: Vec<Vec<f64>>,
    /// Expected transition counts summed over time.
    xi_sum: Vec<Vec<f64>>,
    log_likelihood: f64,
}

fn forward_backward(model: &GaussianHmm, x: &[f64], with_xi: bool) -> Result<ForwardBackward> {
    let k = model.k();
    let t_len = x.len();
    let log_b = model.log_emissions(x);
    // emissions rescaled per step by their maximum
    let mut shift = vec![0.0; t_len];
    let b: Vec<Vec<f64>> = log_b
        .iter()
        .zip(&mut shift)
        .map(|(row, s)| {
            *s = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter().map(|l| (l - *s).exp()).collect()
        })
        .collect();

    let mut alpha = vec![vec![0.0; k]; t_len];
    let mut scale = vec![0.0; t_len];
    for t in 0..t_len {
        for j in 0..k {
            let prior = if t == 0 { model.initial[j] } else { (0..k).map(|i| alpha[t - 1][i] * model.transition[i][j]).sum() };
            alpha[t][j] = prior * b[t][j];
        }
        let c: f64 = alpha[t].iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NonFinite("forward recursion"));
        }
        alpha[t].iter_mut().for_each(|a| *a /= c);
        scale[t] = c;
    }
    let log_likelihood = scale.iter().zip(&shift).map(|(c, s)| c.ln() + s).sum();

    let mut beta = vec![vec![1.0; k]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..k {
            beta[t][i] = (0..k).map(|j| model.transition[i][j] * b[t + 1][j] * beta[t + 1][j]).sum::<f64>() / scale[t + 1];
        }
    }

    let gamma: Vec<Vec<f64>> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, be)| {
            let row: Vec<f64> = a.iter().zip(be).map(|(x, y)| x * y).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|g| g / total).collect()
        })
        .collect();

    let mut xi_sum = vec![vec![0.0; k]; k];
    if with_xi {
        for t in 0..t_len.saturating_sub(1) {
            let mut local = vec![vec![0.0; k]; k];
            let mut total = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let v = alpha[t][i] * model.transition[i][j] * b[t + 1][j] * beta[t + 1][j];
                    local[i][j] = v;
                    total += v;
                }
            }
            for i in 0..k {
                for j in 0..k {
                    xi_sum[i][j] += local[i][j] / total;
                }
            }
        }
    }
    Ok(ForwardBackward { gamma, xi_sum, log_likelihood })
}

/// Per-step state posteriors and the log-likelihood of `x`.
pub fn posteriors(model: &GaussianHmm, x: &[f64]) -> Result<(Vec<Vec<f64>>, f64)> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let fb = forward_backward(model, x, false)?;
    Ok((fb.gamma, fb.log_likelihood))
}

fn quantile_split_init(x: &[f64], k: usize, floor: f64) -> GaussianHmm {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()).then(a.cmp(&b)));
    let (means, variances) = (0..k)
        .map(|j| {
            let chunk: Vec<f64> = order[j * x.len() / k..(j + 1) * x.len() / k].iter().map(|&i| x[i]).collect();
            let (m, v) = population_mean_variance(&chunk);
            (m, v.max(floor))
        })
        .unzip();
    let off = if k > 1 { 0.1 / (k - 1) as f64 } else { 0.0 };
    let transition = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        if k > 1 {
                            0.9
                        } else {
                            1.0
                        }
                    } else {
                        off
                    }
                })
                .collect()
        })
        .collect();
    GaussianHmm { initial: vec![1.0 / k as f64; k], transition, means, variances }
}

fn jitter(model: &mut GaussianHmm, seed: u64, restart: usize) {
    let mut rng = rng::stream(rng::derive_seed(seed, HMM_SEED_TAG, restart as u64), 0);
    for (m, v) in model.means.iter_mut().zip(&mut model.variances) {
        let z: f64 = rng.sample(StandardNormal);
        *m += 0.5 * v.sqrt() * z;
        *v *= rng.gen_range(0.5..2.0);
    }
}

fn em(x: &[f64], mut model: GaussianHmm, cfg: &HmmFitConfig, restart: usize) -> Result<HmmFit> {
    let k = model.k();
    let mut trace = Vec::new();
    let mut floored = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_em_iterations {
        let fb = forward_backward(&model, x, true)?;
        if let Some(&prev) = trace.last() {
            if fb.log_likelihood - prev < cfg.tolerance {
                trace.push(fb.log_likelihood);
                converged = true;
                break;
            }
        }
        trace.push(fb.log_likelihood);

        model.initial = fb.gamma[0].clone();
        for j in 0..k {
            let mass: f64 = fb.gamma.iter().map(|g| g[j]).sum();
            if mass.is_nan() || mass <= f64::MIN_POSITIVE {
                return Err(Error::DegenerateEmission(j));
            }
            let mean = fb.gamma.iter().zip(x).map(|(g, xt)| g[j] * xt).sum::<f64>() / mass;
            let var = fb.gamma.iter().zip(x).map(|(g, xt)| g[j] * (xt - mean) * (xt - mean)).sum::<f64>() / mass;
            model.means[j] = mean;
            model.variances[j] = if var < cfg.variance_floor {
                if !floored.contains(&j) {
                    floored.push(j);
                }
                cfg.variance_floor
            } else {
                var
            };
            let out: f64 = fb.xi_sum[j].iter().sum();
            if out > 0.0 {
                model.transition[j] = fb.xi_sum[j].iter().map(|v| v / out).collect();
            }
        }
    }
    if !converged {
        trace.push(forward_backward(&model, x, false)?.log_likelihood);
    }
    model.canonicalize();
    Ok(HmmFit { model, log_likelihood_trace: trace, converged, restart, floored_states: floored })
}

/// Fits a `k`-state Gaussian HMM by Baum-Welch. Restarts run in parallel
/// and the fit with the highest final log-likelihood wins. States are
/// ordered by ascending emission variance.
pub fn fit_gaussian_hmm(returns: &[f64], k: usize, cfg: &HmmFitConfig) -> Result<HmmFit> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if returns.len() < 10 * k {
        return Err(Error::InvalidConfig(format!("{} returns are too few for {k} states", returns.len())));
    }
    if returns.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("returns"));
    }
    let base = quantile_split_init(returns, k, cfg.variance_floor);
    let fits: Vec<Result<HmmFit>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut start = base.clone();
            if restart > 0 {
                jitter(&mut start, cfg.seed, restart);
            }
            em(returns, start, cfg, restart)
        })
        .collect();
    let mut best: Option<HmmFit> = None;
    let mut first_error = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                let better = best.as_ref().map_or(true, |b| f.log_likelihood_trace.last() > b.log_likelihood_trace.last());
                if better {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_error.unwrap_or(Error::DegenerateEmission(0)))
}

/// Viterbi state path, 0-based, ties broken towards the lower state.
pub fn decode(model: &GaussianHmm, x: &[f64]) -> Vec<usize> {
    let k = model.k();
    if x.is_empty() {
        return Vec::new();
    }
    let log_b = model.log_emissions(x);
    let log_a: Vec<Vec<f64>> = model.transition.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let mut delta: Vec<f64> = (0..k).map(|j| model.initial[j].ln() + log_b[0][j]).collect();
    let mut back = vec![vec![0usize; k]; x.len()];
    for t in 1..x.len() {
        let next: Vec<f64> = (0..k)
            .map(|j| {
                let (arg, best) =
                    (0..k).map(|i| (i, delta[i] + log_a[i][j])).fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
                back[t][j] = arg;
                best + log_b[t][j]
            })
            .collect();
        delta = next;
    }
    let mut state = (0..k).fold(0, |acc, j| if delta[j] > delta[acc] { j } else { acc });
    let mut path = vec![0; x.len()];
    for t in (0..x.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    path
}

/// Majority label of each window, ties broken towards the lower label.
pub fn window_majority(labels: &[usize], windows: &[Range<usize>], k: usize) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|w| {
            let slice = labels.get(w.clone()).ok_or(Error::WindowOutOfBounds { start: w.start, end: w.end, len: labels.len() })?;
            let mut counts = vec![0usize; k];
            for &l in slice {
                *counts.get_mut(l).ok_or_else(|| Error::InvalidConfig(format!("label {l} out of range for k = {k}")))? += 1;
            }
            Ok((0..k).fold(0, |acc, j| if counts[j] > counts[acc] { j } else { acc }))
        })
        .collect()
}
