//! Price streams, log-returns, sliding-window lifts and empirical measures.
//!
//! All variance computations in the crate use the population convention
//! (divide by the count).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A price path with strictly increasing timestamps.
///
/// Timestamps are integers: either a plain step index or seconds since the
/// Unix epoch when ingested from ISO-8601 strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceStream {
    timestamps: Vec<i64>,
    prices: Vec<f64>,
}

impl PriceStream {
    pub fn new(timestamps: Vec<i64>, prices: Vec<f64>) -> Result<Self> {
        if timestamps.len() != prices.len() {
            return Err(Error::LengthMismatch(timestamps.len(), prices.len()));
        }
        if prices.len() < 2 {
            return Err(Error::TooShort(prices.len()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::UnorderedTimestamps(i + 1));
        }
        if let Some((index, &value)) = prices.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::NonPositivePrice { index, value });
        }
        Ok(Self { timestamps, prices })
    }

    /// Prices indexed by step `0..n`.
    pub fn from_prices(prices: Vec<f64>) -> Result<Self> {
        let timestamps = (0..prices.len() as i64).collect();
        Self::new(timestamps, prices)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Log-returns `r_i = ln s_{i+1} - ln s_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReturnStream(pub Vec<f64>);

impl ReturnStream {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sliding-window parameters: windows hold `h1` returns and consecutive
/// windows overlap by `h2`, so the stride is `h1 - h2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub h1: usize,
    pub h2: usize,
}

impl WindowConfig {
    pub fn new(h1: usize, h2: usize) -> Result<Self> {
        let cfg = Self { h1, h2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h1 < 2 {
            return Err(Error::InvalidWindow(format!("h1 = {} must be at least 2", self.h1)));
        }
        if self.h2 >= self.h1 {
            return Err(Error::InvalidWindow(format!("h2 = {} must be smaller than h1 = {}", self.h2, self.h1)));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.h1 - self.h2
    }

    /// Largest number of windows that can cover a single return,
    /// `ceil(h1 / (h1 - h2))`.
    pub fn max_multiplicity(&self) -> usize {
        self.h1.div_ceil(self.stride())
    }
}

/// Splits a stream of `n_returns` returns into windows of length `h1` with
/// stride `h1 - h2`. At most `floor(N / stride)` windows are produced and
/// windows running past the end of the stream are dropped.
pub fn lift(n_returns: usize, cfg: WindowConfig) -> Result<Vec<Range<usize>>> {
    cfg.validate()?;
    if n_returns < cfg.h1 {
        return Err(Error::StreamTooShort { len: n_returns, h1: cfg.h1 });
    }
    let stride = cfg.stride();
    let max_windows = n_returns / stride;
    Ok((0..max_windows).map(|i| i * stride).take_while(|start| start + cfg.h1 <= n_returns).map(|start| start..start + cfg.h1).collect())
}

/// Uniform probability measure on a finite set of real atoms, stored as its
/// order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
    /// Index range of the returns the measure was built from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_span: Option<Range<usize>>,
}

impl EmpiricalMeasure {
    /// Builds a measure from unsorted values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("empirical measure atoms"));
        }
        let mut atoms = values.to_vec();
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms, source_span: None })
    }

    /// Wraps atoms the caller guarantees are finite and sorted ascending.
    pub(crate) fn from_sorted_unchecked(atoms: Vec<f64>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0] <= w[1]));
        Self { atoms, source_span: None }
    }

    pub fn with_span(mut self, span: Range<usize>) -> Self {
        self.source_span = Some(span);
        self
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn source_span(&self) -> Option<Range<usize>> {
        self.source_span.clone()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `F(x) = #{atoms <= x} / n`.
    pub fn cdf(&self, x: f64) -> f64 {
        let count = self.atoms.partition_point(|&a| a <= x);
        count as f64 / self.atoms.len() as f64
    }

    /// Quantile function `inf { x : F(x) > z }` for `z` in `[0, 1)`.
    pub fn quantile(&self, z: f64) -> f64 {
        let n = self.atoms.len();
        let idx = ((z * n as f64).floor() as usize).min(n - 1);
        self.atoms[idx]
    }

    pub fn mean(&self) -> f64 {
        population_mean_variance(&self.atoms).0
    }

    pub fn variance(&self) -> f64 {
        population_mean_variance(&self.atoms).1
    }

    /// Applies `x -> scale * x + shift` to every atom.
    pub fn affine(&self, scale: f64, shift: f64) -> Self {
        let mut atoms: Vec<f64> = self.atoms.iter().map(|a| scale * a + shift).collect();
        if scale < 0.0 {
            atoms.reverse();
        }
        Self { atoms, source_span: self.source_span.clone() }
    }
}

pub fn log_returns(prices: &PriceStream) -> ReturnStream {
    let logs: Vec<f64> = prices.prices().iter().map(|p| p.ln()).collect();
    ReturnStream(logs.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Log-returns of a raw price vector, validating positivity and length.
pub fn log_returns_of(prices: &[f64]) -> Result<ReturnStream> {
    let stream = PriceStream::from_prices(prices.to_vec())?;
    Ok(log_returns(&stream))
}

pub fn empirical_measure(returns: &ReturnStream, window: Range<usize>) -> Result<EmpiricalMeasure> {
    if window.start >= window.end || window.end > returns.len() {
        return Err(Error::WindowOutOfBounds { start: window.start, end: window.end, len: returns.len() });
    }
    Ok(EmpiricalMeasure::from_values(&returns.values()[window.clone()])?.with_span(window))
}

/// Lifts a return stream and builds one measure per window.
pub fn measures_from_returns(returns: &ReturnStream, cfg: WindowConfig) -> Result<(Vec<Range<usize>>, Vec<EmpiricalMeasure>)> {
    let windows = lift(returns.len(), cfg)?;
    let measures = windows.iter().map(|w| empirical_measure(returns, w.clone())).collect::<Result<Vec<_>>>()?;
    Ok((windows, measures))
}

/// Truncated raw-moment map: component `n` is `E[x^n] / n!` for `n = 1..=p`.
pub fn moment_map(mu: &EmpiricalMeasure, p: usize) -> Vec<f64> {
    let count = mu.len() as f64;
    let mut sums = vec![0.0; p];
    for &a in mu.atoms() {
        let mut power = 1.0;
        for s in sums.iter_mut() {
            power *= a;
            *s += power;
        }
    }
    let mut factorial = 1.0;
    sums.iter()
        .enumerate()
        .map(|(i, s)| {
            factorial *= (i + 1) as f64;
            s / count / factorial
        })
        .collect()
}

/// Per-column location and scale used by [`standardize_columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub means: Vec<f64>,
    /// Population standard deviations; zero for constant columns.
    pub sds: Vec<f64>,
}

impl ColumnScaling {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let (means, sds) = (0..dim)
            .map(|j| {
                let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                let (m, v) = population_mean_variance(&column);
                (m, v.sqrt())
            })
            .unzip();
        Self { means, sds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.means.iter().zip(&self.sds)).map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 }).collect()
    }

    /// Maps a standardized row back to the original coordinates.
    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.means.iter().zip(&self.sds)).map(|(z, (m, s))| z * s + m).collect()
    }
}

/// Standardizes each column to mean 0 and population variance 1. Constant
/// columns become all zeros.
pub fn standardize_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scaling = ColumnScaling::fit(rows);
    rows.iter().map(|r| scaling.apply(r)).collect()
}

/// `(sd, mean)` of a measure under the population convention.
pub fn mean_variance_projection(mu: &EmpiricalMeasure) -> (f64, f64) {
    let (mean, var) = population_mean_variance(mu.atoms());
    (var.sqrt(), mean)
}

/// Population mean and variance, two-pass. Returns `(0, 0)` for empty input.
pub fn population_mean_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Median with the midpoint convention for even counts. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn log_returns_examples() {
        assert_eq!(log_returns_of(&[1.0, 1.0, 1.0]).unwrap().0, vec![0.0, 0.0]);
        let r = log_returns_of(&[1.0, std::f64::consts::E]).unwrap();
        assert!(close(r.0[0], 1.0, 1e-15));
        let r = log_returns_of(&[100.0, 102.0, 101.0]).unwrap();
        assert!(close(r.0[0], 1.02f64.ln(), 1e-15));
        assert!(close(r.0[1], (101.0f64 / 102.0).ln(), 1e-15));
    }

    #[test]
    fn log_returns_rejects_bad_prices() {
        assert!(matches!(log_returns_of(&[1.0, 0.0, 2.0]), Err(Error::NonPositivePrice { index: 1, .. })));
        assert!(matches!(log_returns_of(&[1.0, -3.0]), Err(Error::NonPositivePrice { .. })));
        assert_eq!(log_returns_of(&[1.0]), Err(Error::TooShort(1)));
    }

    #[test]
    fn price_stream_rejects_unordered_timestamps() {
        assert_eq!(PriceStream::new(vec![0, 2, 2], vec![1.0, 1.0, 1.0]), Err(Error::UnorderedTimestamps(2)));
        assert!(PriceStream::new(vec![3, 1], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn lift_examples() {
        let w = lift(10, WindowConfig::new(5, 0).unwrap()).unwrap();
        assert_eq!(w, vec![0..5, 5..10]);
        let w = lift(35, WindowConfig::new(35, 28).unwrap()).unwrap();
        assert_eq!(w, vec![0..35]);
        let w = lift(49, WindowConfig::new(35, 28).unwrap()).unwrap();
        assert_eq!(w.iter().map(|r| r.start).collect::<Vec<_>>(), vec![0, 7, 14]);
    }

    #[test]
    fn lift_errors() {
        assert_eq!(lift(4, WindowConfig { h1: 5, h2: 0 }), Err(Error::StreamTooShort { len: 4, h1: 5 }));
        assert!(WindowConfig::new(5, 5).is_err());
        assert!(WindowConfig::new(1, 0).is_err());
    }

    #[test]
    fn max_multiplicity_formula() {
        assert_eq!(WindowConfig::new(35, 28).unwrap().max_multiplicity(), 5);
        assert_eq!(WindowConfig::new(10, 0).unwrap().max_multiplicity(), 1);
        assert_eq!(WindowConfig::new(10, 3).unwrap().max_multiplicity(), 2);
    }

    #[test]
    fn empirical_measure_examples() {
        let r = ReturnStream(vec![3.0, 1.0, 2.0]);
        assert_eq!(empirical_measure(&r, 0..3).unwrap().atoms(), &[1.0, 2.0, 3.0]);
        let m = EmpiricalMeasure::from_values(&[0.0, 0.0]).unwrap();
        assert_eq!(m.atoms(), &[0.0, 0.0]);
        assert_eq!(m.cdf(0.0), 1.0);
        let m = EmpiricalMeasure::from_values(&[-1.0, 4.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.cdf(2.0), 0.75);
        assert!(empirical_measure(&r, 1..4).is_err());
        assert_eq!(EmpiricalMeasure::from_values(&[]), Err(Error::EmptyMeasure));
    }

    #[test]
    fn quantile_matches_order_statistics() {
        let m = EmpiricalMeasure::from_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(m.quantile(0.0), 1.0);
        assert_eq!(m.quantile(0.2499), 1.0);
        assert_eq!(m.quantile(0.25), 2.0);
        assert_eq!(m.quantile(0.99), 4.0);
    }

    #[test]
    fn moment_map_examples() {
        let ones = EmpiricalMeasure::from_values(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(moment_map(&ones, 2), vec![1.0, 0.5]);
        let zeros = EmpiricalMeasure::from_values(&[0.0, 0.0]).unwrap();
        assert_eq!(moment_map(&zeros, 5), vec![0.0; 5]);
        let m = EmpiricalMeasure::from_values(&[1.0, 2.0, 3.0]).unwrap();
        let phi = moment_map(&m, 3);
        assert!(close(phi[0], 2.0, 1e-15));
        assert!(close(phi[1], 14.0 / 6.0, 1e-15));
        // third raw moment is 36/3 = 12, divided by 3! = 2
        assert!(close(phi[2], 2.0, 1e-15));
    }

    #[test]
    fn standardize_examples() {
        let z = standardize_columns(&[vec![1.0], vec![3.0]]);
        assert_eq!(z, vec![vec![-1.0], vec![1.0]]);
        let z = standardize_columns(&[vec![5.0], vec![5.0], vec![5.0]]);
        assert_eq!(z, vec![vec![0.0]; 3]);
    }

    #[test]
    fn standardize_normal_columns_self_check() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::stream(11, 0);
        let rows: Vec<Vec<f64>> =
            (0..10_000).map(|_| vec![rng.sample(StandardNormal), 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)]).collect();
        let z = standardize_columns(&rows);
        for j in 0..2 {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            let (m, v) = population_mean_variance(&col);
            assert!(m.abs() < 0.05);
            assert!((v - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn column_scaling_round_trips() {
        let rows = vec![vec![1.0, 10.0], vec![2.0, 30.0], vec![4.0, 20.0]];
        let scaling = ColumnScaling::fit(&rows);
        for r in &rows {
            let back = scaling.invert(&scaling.apply(r));
            assert!(back.iter().zip(r).all(|(a, b)| close(*a, *b, 1e-12)));
        }
    }

    #[test]
    fn mean_variance_examples() {
        let m = EmpiricalMeasure::from_values(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(mean_variance_projection(&m), (0.0, 0.0));
        let m = EmpiricalMeasure::from_values(&[-1.0, 1.0]).unwrap();
        assert_eq!(mean_variance_projection(&m), (1.0, 0.0));
        let m = EmpiricalMeasure::from_values(&[2.0, 4.0, 6.0]).unwrap();
        let (sd, mean) = mean_variance_projection(&m);
        assert!(close(sd, (8.0f64 / 3.0).sqrt(), 1e-15));
        assert_eq!(mean, 4.0);
    }

    #[test]
    fn median_convention() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn lift_windows_are_regular(n in 2usize..400, h1 in 2usize..40, h2_frac in 0.0f64..1.0) {
            let h2 = ((h1 as f64) * h2_frac) as usize % h1;
            let cfg = WindowConfig::new(h1, h2).unwrap();
            prop_assume!(n >= h1);
            let windows = lift(n, cfg).unwrap();
            prop_assert!(!windows.is_empty());
            for w in &windows {
                prop_assert_eq!(w.len(), h1);
                prop_assert!(w.end <= n);
            }
            for pair in windows.windows(2) {
                prop_assert_eq!(pair[1].start - pair[0].start, h1 - h2);
            }
        }

        #[test]
        fn measure_is_permutation_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..30), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let a = EmpiricalMeasure::from_values(&v).unwrap();
            v.shuffle(&mut crate::rng::stream(seed, 0));
            let b = EmpiricalMeasure::from_values(&v).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn moment_map_prefix(v in prop::collection::vec(-2f64..2.0, 1..20), p in 1usize..8) {
            let m = EmpiricalMeasure::from_values(&v).unwrap();
            let short = moment_map(&m, p);
            let long = moment_map(&m, p + 1);
            prop_assert_eq!(&long[..p], &short[..]);
        }

        #[test]
        fn standardize_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-100f64..100.0, 3), 2..40)) {
            let once = standardize_columns(&rows);
            let twice = standardize_columns(&once);
            let scaling = ColumnScaling::fit(&rows);
            for (a, b) in once.iter().zip(&twice) {
                for j in 0..3 {
                    if scaling.sds[j] > 1e-9 {
                        prop_assert!((a[j] - b[j]).abs() <= 1e-10);
                    }
                }
            }
        }

        #[test]
        fn mean_variance_shift(v in prop::collection::vec(-1f64..1.0, 1..40), c in -1f64..1.0) {
            let m = EmpiricalMeasure::from_values(&v).unwrap();
            let (sd0, mean0) = mean_variance_projection(&m);
            let (sd1, mean1) = mean_variance_projection(&m.affine(1.0, c));
            prop_assert!((mean1 - mean0 - c).abs() <= 1e-12);
            prop_assert!((sd1 - sd0).abs() <= 1e-12);
        }
    }
}
