//! One-dimensional p-Wasserstein distances and barycenters between empirical
//! measures.
//!
//! For measures on the real line the optimal coupling is monotone, so the
//! distance reduces to an integral of the difference of quantile functions.
//! With equal atom counts this is the l_p mean of the sorted atom
//! differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{median, EmpiricalMeasure};

/// Order `p >= 1` of the Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct WassersteinOrder(f64);

impl WassersteinOrder {
    pub const ONE: Self = Self(1.0);
    pub const TWO: Self = Self(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::UnsupportedOrder(p))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub(crate) fn pow_abs(self, x: f64) -> f64 {
        if self.0 == 1.0 {
            x.abs()
        } else if self.0 == 2.0 {
            x * x
        } else {
            x.abs().powf(self.0)
        }
    }

    #[inline]
    pub(crate) fn root(self, x: f64) -> f64 {
        if self.0 == 1.0 {
            x
        } else if self.0 == 2.0 {
            x.sqrt()
        } else {
            x.powf(1.0 / self.0)
        }
    }
}

impl Default for WassersteinOrder {
    fn default() -> Self {
        Self::ONE
    }
}

impl TryFrom<f64> for WassersteinOrder {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<WassersteinOrder> for f64 {
    fn from(p: WassersteinOrder) -> f64 {
        p.0
    }
}

/// `W_p(mu, nu)^p`. The k-means inner loops work in this form and take the
/// root only when a distance is reported.
pub fn wasserstein_pow(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: WassersteinOrder) -> Result<f64> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    Ok(if mu.len() == nu.len() { equal_count_pow(mu.atoms(), nu.atoms(), p) } else { quantile_integral_pow(mu.atoms(), nu.atoms(), p) })
}

pub fn wasserstein_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: WassersteinOrder) -> Result<f64> {
    Ok(p.root(wasserstein_pow(mu, nu, p)?))
}

#[inline]
pub(crate) fn equal_count_pow(a: &[f64], b: &[f64], p: WassersteinOrder) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(x, y)| p.pow_abs(x - y)).sum();
    sum / a.len() as f64
}

/// Integrates `|F^-1(z) - G^-1(z)|^p` exactly over the merged breakpoint
/// grid `{i/n} U {j/m}`. Breakpoints are kept on the integer scale `n * m`.
fn quantile_integral_pow(a: &[f64], b: &[f64], p: WassersteinOrder) -> f64 {
    let (n, m) = (a.len() as u64, b.len() as u64);
    let total = n * m;
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0u64;
    let mut acc = 0.0;
    while prev < total {
        let next_a = (i as u64 + 1) * m;
        let next_b = (j as u64 + 1) * n;
        let next = next_a.min(next_b);
        acc += (next - prev) as f64 * p.pow_abs(a[i] - b[j]);
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
        prev = next;
    }
    acc / total as f64
}

/// Largest atom count accepted by [`ot_oracle`].
pub const ORACLE_MAX_ATOMS: usize = 8;

/// Exact discrete optimal transport between two small uniform measures,
/// computed without using the monotone (sorted) coupling.
///
/// Equal counts: the Kantorovich polytope between uniform measures is the
/// Birkhoff polytope, so the minimum is attained at a permutation and all
/// `n!` permutations are enumerated. Unequal counts: both measures are
/// expanded to `lcm(n, m)` equal-mass atoms and the resulting assignment
/// problem is solved with the Hungarian method.
pub fn ot_oracle(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: WassersteinOrder) -> Result<f64> {
    let (n, m) = (mu.len(), nu.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyMeasure);
    }
    let largest = n.max(m);
    if largest > ORACLE_MAX_ATOMS {
        return Err(Error::InstanceTooLarge(largest, ORACLE_MAX_ATOMS));
    }
    let cost = |x: f64, y: f64| p.pow_abs(x - y);
    let best = if n == m {
        let a = mu.atoms();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        for_each_permutation(&mut perm, &mut |perm| {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost(a[i], nu.atoms()[j])).sum();
            best = best.min(c);
        });
        best / n as f64
    } else {
        let l = lcm(n, m);
        let xs: Vec<f64> = mu.atoms().iter().flat_map(|&x| std::iter::repeat(x).take(l / n)).collect();
        let ys: Vec<f64> = nu.atoms().iter().flat_map(|&y| std::iter::repeat(y).take(l / m)).collect();
        let matrix: Vec<Vec<f64>> = xs.iter().map(|&x| ys.iter().map(|&y| cost(x, y)).collect()).collect();
        hungarian_min_cost(&matrix) / l as f64
    };
    Ok(p.root(best))
}

fn for_each_permutation(items: &mut [usize], visit: &mut impl FnMut(&[usize])) {
    // Heap's algorithm, iterative form.
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n^3)).
fn hungarian_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = col0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        col1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[matched_row[j] - 1][j - 1]).sum()
}

/// Barycenter of measures sharing an atom count `N`.
///
/// `p = 1`: atom `j` is the median of the `j`-th order statistics (midpoint
/// of the two central values for an even number of measures; any point
/// between them is also optimal). `p = 2`: atom `j` is their mean.
pub fn wasserstein_barycenter(measures: &[&EmpiricalMeasure], p: WassersteinOrder) -> Result<EmpiricalMeasure> {
    let first = measures.first().ok_or(Error::EmptyMeasure)?;
    let n = first.len();
    if n == 0 {
        return Err(Error::EmptyMeasure);
    }
    if let Some(other) = measures.iter().find(|m| m.len() != n) {
        return Err(Error::UnequalAtomCounts(n, other.len()));
    }
    if p != WassersteinOrder::ONE && p != WassersteinOrder::TWO {
        return Err(Error::UnsupportedOrder(p.get()));
    }
    let count = measures.len() as f64;
    let mut column = Vec::with_capacity(measures.len());
    let mut atoms: Vec<f64> = (0..n)
        .map(|j| {
            column.clear();
            column.extend(measures.iter().map(|m| m.atoms()[j]));
            if p == WassersteinOrder::ONE {
                median(&column).expect("non-empty column")
            } else {
                column.iter().sum::<f64>() / count
            }
        })
        .collect();
    atoms.sort_by(f64::total_cmp);
    Ok(EmpiricalMeasure::from_sorted_unchecked(atoms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_values(v).unwrap()
    }

    fn random_measure(rng: &mut impl Rng, n: usize) -> EmpiricalMeasure {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        m(&v)
    }

    #[test]
    fn distance_examples() {
        let mu = m(&[0.3, -1.0, 2.0]);
        assert_eq!(wasserstein_distance(&mu, &mu, WassersteinOrder::TWO).unwrap(), 0.0);
        assert_eq!(wasserstein_distance(&m(&[0.0]), &m(&[1.0]), WassersteinOrder::ONE).unwrap(), 1.0);
        let d = wasserstein_distance(&m(&[0.0, 2.0]), &m(&[1.0, 3.0]), WassersteinOrder::TWO).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let o = ot_oracle(&m(&[0.0, 2.0]), &m(&[1.0, 3.0]), WassersteinOrder::TWO).unwrap();
        assert!((o - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unequal_counts_by_hand() {
        // mu = {0, 1} (mass 1/2 each), nu = {0, 0, 3} (mass 1/3 each).
        // Quantiles on [0,1/3): 0 vs 0; [1/3,1/2): 0 vs 0; [1/2,2/3): 1 vs 0; [2/3,1): 1 vs 3.
        // W_1 = (1/6)*1 + (1/3)*2 = 5/6.
        let d = wasserstein_distance(&m(&[0.0, 1.0]), &m(&[0.0, 0.0, 3.0]), WassersteinOrder::ONE).unwrap();
        assert!((d - 5.0 / 6.0).abs() < 1e-15);
        let o = ot_oracle(&m(&[0.0, 1.0]), &m(&[0.0, 0.0, 3.0]), WassersteinOrder::ONE).unwrap();
        assert!((o - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_order_errors() {
        assert!(WassersteinOrder::new(0.5).is_err());
        assert!(WassersteinOrder::new(f64::NAN).is_err());
        let a = m(&[1.0]);
        let three = WassersteinOrder::new(3.0).unwrap();
        assert_eq!(wasserstein_barycenter(&[&a], three), Err(Error::UnsupportedOrder(3.0)));
        assert!(matches!(wasserstein_barycenter(&[&a, &m(&[1.0, 2.0])], WassersteinOrder::ONE), Err(Error::UnequalAtomCounts(1, 2))));
        assert_eq!(wasserstein_barycenter(&[], WassersteinOrder::ONE), Err(Error::EmptyMeasure));
    }

    #[test]
    fn oracle_size_cap() {
        let big = m(&[0.0; 9]);
        assert_eq!(ot_oracle(&big, &big, WassersteinOrder::ONE), Err(Error::InstanceTooLarge(9, 8)));
    }

    #[test]
    fn oracle_matches_closed_form_on_random_instances() {
        let mut rng = rng::stream(2024, 1);
        for trial in 0..100 {
            let n = rng.gen_range(1..=6);
            let p = if trial % 3 == 0 {
                WassersteinOrder::new(1.5).unwrap()
            } else if trial % 2 == 0 {
                WassersteinOrder::ONE
            } else {
                WassersteinOrder::TWO
            };
            let (a, b) = (random_measure(&mut rng, n), random_measure(&mut rng, n));
            let fast = wasserstein_distance(&a, &b, p).unwrap();
            let exact = ot_oracle(&a, &b, p).unwrap();
            assert!((fast - exact).abs() < 1e-9, "n={n} fast={fast} exact={exact}");
        }
        for _ in 0..60 {
            let (n, k) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let (a, b) = (random_measure(&mut rng, n), random_measure(&mut rng, k));
            for p in [WassersteinOrder::ONE, WassersteinOrder::TWO] {
                let fast = wasserstein_distance(&a, &b, p).unwrap();
                let exact = ot_oracle(&a, &b, p).unwrap();
                assert!((fast - exact).abs() < 1e-9, "n={n} m={k} fast={fast} exact={exact}");
            }
        }
    }

    #[test]
    fn barycenter_examples() {
        let a = m(&[0.5, -2.0, 1.0]);
        assert_eq!(wasserstein_barycenter(&[&a], WassersteinOrder::ONE).unwrap().atoms(), a.atoms());
        let b = wasserstein_barycenter(&[&m(&[0.0]), &m(&[1.0])], WassersteinOrder::TWO).unwrap();
        assert_eq!(b.atoms(), &[0.5]);
        let family = [m(&[0.0]), m(&[1.0]), m(&[10.0])];
        let refs: Vec<&EmpiricalMeasure> = family.iter().collect();
        let b = wasserstein_barycenter(&refs, WassersteinOrder::ONE).unwrap();
        assert_eq!(b.atoms(), &[1.0]);
        let objective = |x: f64| -> f64 { family.iter().map(|f| wasserstein_distance(f, &m(&[x]), WassersteinOrder::ONE).unwrap()).sum() };
        assert_eq!(objective(1.0), 10.0);
        // grid over the hull of the atoms
        for i in 0..=1000 {
            let x = i as f64 * 0.01;
            assert!(objective(1.0) <= objective(x) + 1e-12);
        }
        assert!(objective(1.0) < objective(1.0 + 1e-3));
        assert!(objective(1.0) < objective(1.0 - 1e-3));
    }

    #[test]
    fn even_count_median_is_midpoint() {
        let b = wasserstein_barycenter(&[&m(&[0.0, 4.0]), &m(&[2.0, 6.0])], WassersteinOrder::ONE).unwrap();
        assert_eq!(b.atoms(), &[1.0, 5.0]);
    }

    #[test]
    fn barycenters_minimize_their_objectives() {
        let mut rng = rng::stream(77, 0);
        for _ in 0..30 {
            let count = rng.gen_range(1..=7);
            let n = rng.gen_range(1..=6);
            let family: Vec<EmpiricalMeasure> = (0..count).map(|_| random_measure(&mut rng, n)).collect();
            let refs: Vec<&EmpiricalMeasure> = family.iter().collect();
            for p in [WassersteinOrder::ONE, WassersteinOrder::TWO] {
                let bary = wasserstein_barycenter(&refs, p).unwrap();
                let objective = |nu: &EmpiricalMeasure| -> f64 { family.iter().map(|f| wasserstein_pow(f, nu, p).unwrap()).sum() };
                let best = objective(&bary);
                for _ in 0..50 {
                    let perturbed: Vec<f64> = bary.atoms().iter().map(|a| a + rng.gen_range(-0.5..0.5)).collect();
                    assert!(best <= objective(&m(&perturbed)) + 1e-10);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn metric_axioms(
            a in prop::collection::vec(-10f64..10.0, 5),
            b in prop::collection::vec(-10f64..10.0, 5),
            c in prop::collection::vec(-10f64..10.0, 5),
            p in 1.0f64..3.0,
        ) {
            let p = WassersteinOrder::new(p).unwrap();
            let (a, b, c) = (m(&a), m(&b), m(&c));
            let ab = wasserstein_distance(&a, &b, p).unwrap();
            prop_assert_eq!(ab, wasserstein_distance(&b, &a, p).unwrap());
            prop_assert_eq!(wasserstein_distance(&a, &a, p).unwrap(), 0.0);
            let ac = wasserstein_distance(&a, &c, p).unwrap();
            let cb = wasserstein_distance(&c, &b, p).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn translation_and_scaling(
            a in prop::collection::vec(-1f64..1.0, 6),
            b in prop::collection::vec(-1f64..1.0, 6),
            shift in -1f64..1.0,
            scale in -3f64..3.0,
        ) {
            let (a, b) = (m(&a), m(&b));
            for p in [WassersteinOrder::ONE, WassersteinOrder::TWO] {
                let base = wasserstein_distance(&a, &b, p).unwrap();
                let shifted = wasserstein_distance(&a.affine(1.0, shift), &b.affine(1.0, shift), p).unwrap();
                prop_assert!((shifted - base).abs() <= 1e-12);
                let scaled = wasserstein_distance(&a.affine(scale, 0.0), &b.affine(scale, 0.0), p).unwrap();
                prop_assert!((scaled - scale.abs() * base).abs() <= 1e-12);
            }
        }
    }
}
