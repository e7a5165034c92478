//! External-label evaluation: Rand index and its pairwise true-positive /
//! true-negative parts, plus run-to-run intervals.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::percentile;

/// Unordered point-pair counts between two labelings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Same group in both labelings.
    pub true_positive: u64,
    /// Different groups in both labelings.
    pub true_negative: u64,
    pub total: u64,
}

impl PairCounts {
    pub fn pwtp(&self) -> f64 {
        self.true_positive as f64 / self.total as f64
    }

    pub fn pwtn(&self) -> f64 {
        self.true_negative as f64 / self.total as f64
    }

    pub fn rand_index(&self) -> f64 {
        self.pwtp() + self.pwtn()
    }
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Pair counts from the contingency table of `a` against `b`.
pub fn pair_counts<A, B>(a: &[A], b: &[B]) -> Result<PairCounts>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("pairwise metrics need at least 2 points".into()));
    }
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    let mut cells: HashMap<(&A, &B), u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
        *cells.entry((x, y)).or_default() += 1;
    }
    let total = choose2(a.len() as u64);
    let same_a: u64 = rows.values().map(|&c| choose2(c)).sum();
    let same_b: u64 = cols.values().map(|&c| choose2(c)).sum();
    let tp: u64 = cells.values().map(|&c| choose2(c)).sum();
    Ok(PairCounts { true_positive: tp, true_negative: total + tp - same_a - same_b, total })
}

pub fn rand_index<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> Result<f64> {
    Ok(pair_counts(a, b)?.rand_index())
}

pub fn pwtp<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> Result<f64> {
    Ok(pair_counts(a, b)?.pwtp())
}

pub fn pwtn<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> Result<f64> {
    Ok(pair_counts(a, b)?.pwtn())
}

/// Empirical central interval holding `coverage` of the run values.
pub fn run_interval(values: &[f64], coverage: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("run interval needs at least 2 values".into()));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::Domain(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    let tail = (1.0 - coverage) / 2.0 * 100.0;
    Ok((percentile(values, tail)?, percentile(values, 100.0 - tail)?))
}
