//! Regime-switching synthetic price paths on an hourly mesh: schedules of
//! regime-change intervals, geometric Brownian motion and Merton jump
//! diffusion generators, and the closed-form moments of their increments.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::PriceStream;
use crate::rng;

/// Mesh resolution: 252 trading days of 7 hours.
pub const STEPS_PER_YEAR: usize = 252 * 7;

const SCHEDULE_TAG: u64 = 0x7363_6865_6475_6c65;
const PATH_TAG: u64 = 0x7061_7468;

/// Minimum number of regime-off steps between two intervals.
pub const MIN_GAP: usize = 3;

pub fn dt() -> f64 {
    1.0 / STEPS_PER_YEAR as f64
}

/// Number of mesh steps in `years` years.
pub fn steps_for_years(years: f64) -> Result<usize> {
    if !(years > 0.0 && years.is_finite()) {
        return Err(Error::InvalidConfig(format!("horizon must be positive, got {years} years")));
    }
    Ok((years * STEPS_PER_YEAR as f64).round() as usize)
}

/// A regime-change interval covering steps `start..start + length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeInterval {
    pub start: usize,
    pub length: usize,
}

impl RegimeInterval {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, step: usize) -> bool {
        self.start <= step && step < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSchedule {
    pub total_steps: usize,
    pub intervals: Vec<RegimeInterval>,
}

impl RegimeSchedule {
    pub fn new(total_steps: usize, intervals: Vec<RegimeInterval>) -> Result<Self> {
        let schedule = Self { total_steps, intervals };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, iv) in self.intervals.iter().enumerate() {
            if iv.length == 0 {
                return Err(Error::InvalidSchedule(format!("interval {i} is empty")));
            }
            if let Some(next) = self.intervals.get(i + 1) {
                if iv.end() + MIN_GAP > next.start {
                    return Err(Error::InvalidSchedule(format!(
                        "interval {i} ends at {} but interval {} starts at {}",
                        iv.end(),
                        i + 1,
                        next.start
                    )));
                }
            }
        }
        if let Some(last) = self.intervals.last() {
            if last.end() > self.total_steps {
                return Err(Error::InvalidSchedule(format!("last interval ends at {} past {} steps", last.end(), self.total_steps)));
            }
        }
        Ok(())
    }

    pub fn is_on(&self, step: usize) -> bool {
        let pos = self.intervals.partition_point(|iv| iv.end() <= step);
        self.intervals.get(pos).is_some_and(|iv| iv.contains(step))
    }

    /// Regime-on flag for every step.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total_steps];
        for iv in &self.intervals {
            mask[iv.start..iv.end()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn on_steps(&self) -> usize {
        self.intervals.iter().map(|iv| iv.length).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum LengthPolicy {
    Fixed {
        length: usize,
    },
    /// Uniform on `min..=max`.
    Random {
        min: usize,
        max: usize,
    },
}

/// Draws `r` intervals whose starts are uniform over all placements that
/// satisfy the spacing constraints.
pub fn build_schedule(total_steps: usize, r: usize, policy: LengthPolicy, seed: u64) -> Result<RegimeSchedule> {
    let mut rng = rng::stream(rng::derive_seed(seed, SCHEDULE_TAG, 0), 0);
    let lengths: Vec<usize> = match policy {
        LengthPolicy::Fixed { length } => vec![length; r],
        LengthPolicy::Random { min, max } => {
            if min > max {
                return Err(Error::InvalidConfig(format!("length range {min}..={max} is empty")));
            }
            (0..r).map(|_| rng.gen_range(min..=max)).collect()
        }
    };
    if lengths.contains(&0) {
        return Err(Error::InvalidConfig("regime lengths must be positive".into()));
    }
    let required: usize = lengths.iter().map(|l| l + MIN_GAP).sum();
    if required > total_steps {
        return Err(Error::Infeasible(format!("{r} intervals need {required} steps including gaps, only {total_steps} available")));
    }
    if r == 0 {
        return RegimeSchedule::new(total_steps, Vec::new());
    }
    // Offsets t_i = s_i - sum_{j<i}(l_j + gap) form a non-decreasing
    // sequence in 0..=free; sorted distinct draws from 0..free + r minus
    // their rank enumerate those sequences uniformly.
    let used: usize = lengths.iter().map(|l| l + MIN_GAP).sum::<usize>() - MIN_GAP;
    let free = total_steps - used;
    let mut picks = index::sample(&mut rng, free + r, r).into_vec();
    picks.sort_unstable();
    let mut offset = 0;
    let intervals = picks
        .iter()
        .zip(&lengths)
        .enumerate()
        .map(|(i, (&pick, &length))| {
            let start = pick - i + offset;
            offset += length + MIN_GAP;
            RegimeInterval { start, length }
        })
        .collect();
    RegimeSchedule::new(total_steps, intervals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    /// Annual drift.
    pub mu: f64,
    /// Annual volatility.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MertonParams {
    pub mu: f64,
    pub sigma: f64,
    /// Jumps per year.
    pub lambda: f64,
    /// Mean of the log jump size.
    pub gamma: f64,
    /// Standard deviation of the log jump size.
    pub delta: f64,
}

/// Parameters of one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Gbm(GbmParams),
    Merton(MertonParams),
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match *self {
            ModelParams::Gbm(GbmParams { mu, sigma }) => mu.is_finite() && positive(sigma),
            ModelParams::Merton(MertonParams { mu, sigma, lambda, gamma, delta }) => {
                mu.is_finite() && gamma.is_finite() && positive(sigma) && positive(lambda) && positive(delta)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid model parameters {self:?}")))
        }
    }

    /// Mean and variance of one log-increment over `dt` years.
    pub fn true_moments(&self, dt: f64) -> (f64, f64) {
        match *self {
            ModelParams::Gbm(GbmParams { mu, sigma }) => ((mu - 0.5 * sigma * sigma) * dt, sigma * sigma * dt),
            ModelParams::Merton(MertonParams { mu, sigma, lambda, gamma, delta }) => {
                ((mu - 0.5 * sigma * sigma + lambda * gamma) * dt, (sigma * sigma + lambda * (delta * delta + gamma * gamma)) * dt)
            }
        }
    }

    /// One log-increment and the number of jumps it contains.
    fn increment<R: Rng>(&self, dt: f64, rng: &mut R) -> (f64, u64) {
        let diffusion = |mu: f64, sigma: f64, z: f64| (mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z;
        let z: f64 = rng.sample(StandardNormal);
        match *self {
            ModelParams::Gbm(GbmParams { mu, sigma }) => (diffusion(mu, sigma, z), 0),
            ModelParams::Merton(MertonParams { mu, sigma, lambda, gamma, delta }) => {
                let jumps = Poisson::new(lambda * dt).map_or(0.0, |p| p.sample(rng)) as u64;
                let mut x = diffusion(mu, sigma, z);
                for _ in 0..jumps {
                    let y: f64 = rng.sample(StandardNormal);
                    x += gamma + delta * y;
                }
                (x, jumps)
            }
        }
    }
}

/// Bull (regime-off) and bear (regime-on) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub bull: ModelParams,
    pub bear: ModelParams,
}

impl ModelSpec {
    pub fn gbm(bull: GbmParams, bear: GbmParams) -> Self {
        Self { bull: ModelParams::Gbm(bull), bear: ModelParams::Gbm(bear) }
    }

    pub fn merton(bull: MertonParams, bear: MertonParams) -> Self {
        Self { bull: ModelParams::Merton(bull), bear: ModelParams::Merton(bear) }
    }

    pub fn validate(&self) -> Result<()> {
        self.bull.validate()?;
        self.bear.validate()
    }

    pub fn regime(&self, on: bool) -> &ModelParams {
        if on {
            &self.bear
        } else {
            &self.bull
        }
    }
}

/// Log-increments of a path plus the total jump count.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub values: Vec<f64>,
    pub jumps: u64,
}

/// Simulates one log-increment per schedule step. Step `i` draws from its
/// own random stream, so each increment depends only on `(seed, i)` and
/// the parameters of the regime active at `i`.
pub fn simulate_increments(schedule: &RegimeSchedule, model: &ModelSpec, seed: u64) -> Result<Increments> {
    schedule.validate()?;
    model.validate()?;
    let key = rng::derive_seed(seed, PATH_TAG, 0);
    let dt = dt();
    let mask = schedule.mask();
    let draws: Vec<(f64, u64)> =
        mask.par_iter().enumerate().map(|(step, &on)| model.regime(on).increment(dt, &mut rng::stream(key, step as u64))).collect();
    Ok(Increments { jumps: draws.iter().map(|d| d.1).sum(), values: draws.into_iter().map(|d| d.0).collect() })
}

/// Provenance of a simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMeta {
    pub schedule: RegimeSchedule,
    pub model: ModelSpec,
    pub s0: f64,
    pub seed: u64,
    pub jumps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub prices: PriceStream,
    pub meta: PathMeta,
}

/// Simulates a price path with `total_steps + 1` prices indexed by step.
pub fn simulate_path(schedule: &RegimeSchedule, model: &ModelSpec, s0: f64, seed: u64) -> Result<PathRecord> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::InvalidConfig(format!("initial price must be positive, got {s0}")));
    }
    let inc = simulate_increments(schedule, model, seed)?;
    let mut prices = Vec::with_capacity(inc.values.len() + 1);
    let mut log_price = s0.ln();
    prices.push(s0);
    for x in &inc.values {
        log_price += x;
        prices.push(log_price.exp());
    }
    let timestamps = (0..prices.len() as i64).collect();
    Ok(PathRecord {
        prices: PriceStream::new(timestamps, prices)?,
        meta: PathMeta { schedule: schedule.clone(), model: *model, s0, seed, jumps: inc.jumps },
    })
}

pub fn simulate_gbm(schedule: &RegimeSchedule, bull: GbmParams, bear: GbmParams, s0: f64, seed: u64) -> Result<PathRecord> {
    simulate_path(schedule, &ModelSpec::gbm(bull, bear), s0, seed)
}

pub fn simulate_merton(schedule: &RegimeSchedule, bull: MertonParams, bear: MertonParams, s0: f64, seed: u64) -> Result<PathRecord> {
    simulate_path(schedule, &ModelSpec::merton(bull, bear), s0, seed)
}

/// Bull and bear parameters of the Gaussian experiment.
pub fn reference_gbm() -> ModelSpec {
    ModelSpec::gbm(GbmParams { mu: 0.02, sigma: 0.2 }, GbmParams { mu: -0.02, sigma: 0.3 })
}

/// Bull and bear parameters of the jump-diffusion experiment.
pub fn reference_merton() -> ModelSpec {
    ModelSpec::merton(
        MertonParams { mu: 0.05, sigma: 0.2, lambda: 5.0, gamma: 0.02, delta: 0.0125 },
        MertonParams { mu: -0.05, sigma: 0.4, lambda: 10.0, gamma: -0.04, delta: 0.1 },
    )
}
