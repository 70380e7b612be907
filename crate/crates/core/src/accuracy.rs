//! Per-return cluster memberships and regime accuracy scores against a
//! known schedule.
//!
//! Label 0 is the standard regime and label 1 the regime change; callers
//! canonicalize cluster labels (by centroid variance) before scoring.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthetic::RegimeSchedule;

/// Counts of covering windows per cluster label, one row per return.
pub type MembershipVector = Vec<usize>;

/// Aggregates window labels into per-return membership counts. Returns not
/// covered by any window get the zero vector.
pub fn membership_vectors(windows: &[Range<usize>], assignments: &[usize], n_returns: usize, k: usize) -> Result<Vec<MembershipVector>> {
    if windows.len() != assignments.len() {
        return Err(Error::LengthMismatch(windows.len(), assignments.len()));
    }
    let mut counts = vec![vec![0; k]; n_returns];
    for (w, &label) in windows.iter().zip(assignments) {
        if label >= k {
            return Err(Error::InvalidConfig(format!("label {label} out of range for k = {k}")));
        }
        if w.end > n_returns {
            return Err(Error::WindowOutOfBounds { start: w.start, end: w.end, len: n_returns });
        }
        for row in &mut counts[w.clone()] {
            row[label] += 1;
        }
    }
    Ok(counts)
}

/// Memberships for labels given directly per return.
pub fn point_memberships(labels: &[usize], k: usize) -> Result<Vec<MembershipVector>> {
    let windows: Vec<Range<usize>> = (0..labels.len()).map(|i| i..i + 1).collect();
    membership_vectors(&windows, labels, labels.len(), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Total accuracy over all covered returns.
    pub ta: f64,
    /// Regime-on accuracy; `None` when no covered return is regime-on.
    pub rons: Option<f64>,
    /// Regime-off accuracy; `None` when no covered return is regime-off.
    pub rofs: Option<f64>,
    pub covered_returns: usize,
    pub uncovered_returns: usize,
}

/// Regime-on, regime-off and total accuracy of the membership counts.
pub fn accuracy_scores(memberships: &[MembershipVector], schedule: &RegimeSchedule) -> Result<AccuracyReport> {
    if memberships.len() != schedule.total_steps {
        return Err(Error::LengthMismatch(memberships.len(), schedule.total_steps));
    }
    let mask = schedule.mask();
    // (correct off, total off, correct on, total on, uncovered)
    let sums = memberships
        .par_iter()
        .zip(&mask)
        .map(|(row, &on)| {
            let total: usize = row.iter().sum();
            let hit = |label: usize| row.get(label).copied().unwrap_or(0);
            match (total, on) {
                (0, _) => [0, 0, 0, 0, 1],
                (_, false) => [hit(0), total, 0, 0, 0],
                (_, true) => [0, 0, hit(1), total, 0],
            }
        })
        .reduce(|| [0; 5], |a, b| std::array::from_fn(|i| a[i] + b[i]));
    let [off_hit, off_total, on_hit, on_total, uncovered] = sums;
    if off_total + on_total == 0 {
        return Err(Error::NoCoveredReturns);
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(AccuracyReport {
        ta: (off_hit + on_hit) as f64 / (off_total + on_total) as f64,
        rons: ratio(on_hit, on_total),
        rofs: ratio(off_hit, off_total),
        covered_returns: memberships.len() - uncovered,
        uncovered_returns: uncovered,
    })
}

/// Membership counts normalized to fractions; `None` for uncovered returns.
pub fn colouring_series(memberships: &[MembershipVector]) -> Vec<Option<Vec<f64>>> {
    memberships
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect()
}
