//! Intercluster distances from empirical Mahalanobis pair samples.
//!
//! For clusters `i` and `j`, every pair `(x in C_i, y in C_j)` is measured in
//! the metric of `C_j`'s covariance. The distance `R_ij` is the larger of the
//! two directed 5th percentiles.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::gmm::{HardAssignment, MixtureModel};
use crate::numerics::{percentile_in_place, regularized_inverse, SymmetricMatrix, DEFAULT_RIDGE};
use crate::seed::{stream, STREAM_PAIRS};

/// Percentile used for both directed samples.
pub const PAIR_PERCENTILE: f64 = 5.0;

pub const DEFAULT_PAIR_CAP: usize = 100_000;

/// Budget and seeding for pair sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSampling {
    /// Maximum number of pairs per ordered cluster pair.
    pub cap: usize,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for PairSampling {
    fn default() -> Self {
        Self { cap: DEFAULT_PAIR_CAP, ridge: DEFAULT_RIDGE, seed: 0 }
    }
}

/// Symmetric, zero-diagonal distance matrix over the non-empty clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistanceMatrix {
    size: usize,
    entries: Vec<f64>,
    member_counts: Vec<usize>,
    /// Mixture component index of each row.
    components: Vec<usize>,
}

impl ClusterDistanceMatrix {
    /// Builds a matrix from row-major entries, checking symmetry, a zero
    /// diagonal and finite non-negative values.
    pub fn from_entries(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut entries = Vec::with_capacity(size * size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::Domain("distance matrix must be square".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!("invalid distance {v} at ({i}, {j})")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::Domain("distance matrix diagonal must be zero".into()));
                }
                if rows[j][i] != v {
                    return Err(Error::Domain(format!("distance matrix asymmetric at ({i}, {j})")));
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { size, entries, member_counts: vec![0; size], components: (0..size).collect() })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn member_counts(&self) -> &[usize] {
        &self.member_counts
    }

    /// Mixture component behind each row; components absent from this list
    /// received no points and were dropped.
    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|i| self.row(i).to_vec()).collect()
    }
}

fn members_of(assignment: &HardAssignment, k: usize) -> Vec<Vec<usize>> {
    assignment.members(k)
}

fn check_inputs(x: &DataMatrix, assignment: &HardAssignment, model: &MixtureModel) -> Result<()> {
    x.check_dim(model.d)?;
    if assignment.0.len() != x.n() {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} points but data has {}",
            assignment.0.len(),
            x.n()
        )));
    }
    if let Some(&bad) = assignment.0.iter().find(|&&l| l >= model.n_components()) {
        return Err(Error::InvalidArgument(format!("label {bad} has no mixture component")));
    }
    Ok(())
}

fn directed_sample(
    x: &DataMatrix,
    from: &[usize],
    to: &[usize],
    same: bool,
    s_inv: &SymmetricMatrix,
    sampling: &PairSampling,
    stream_ids: (usize, usize),
) -> Vec<f64> {
    let d = x.d();
    let total = if same {
        from.len() * from.len().saturating_sub(1)
    } else {
        from.len() * to.len()
    };
    let mut diff = vec![0.0; d];
    let mut measure = |idx: usize| {
        let (a, b) = if same {
            let m = from.len() - 1;
            let a = idx / m;
            let b = idx % m;
            (from[a], to[if b >= a { b + 1 } else { b }])
        } else {
            (from[idx / to.len()], to[idx % to.len()])
        };
        for ((o, p), q) in diff.iter_mut().zip(x.row(a)).zip(x.row(b)) {
            *o = p - q;
        }
        s_inv.quadratic_form(&diff).max(0.0).sqrt()
    };
    if total <= sampling.cap {
        (0..total).map(&mut measure).collect()
    } else {
        let mut rng = stream(sampling.seed, &[STREAM_PAIRS, stream_ids.0 as u64, stream_ids.1 as u64]);
        index::sample(&mut rng, total, sampling.cap).into_iter().map(measure).collect()
    }
}

/// Mahalanobis distances of point pairs `(x in C_i, y in C_j, x != y)`,
/// measured with the inverse covariance of component `j`.
pub fn pair_samples(
    x: &DataMatrix,
    assignment: &HardAssignment,
    model: &MixtureModel,
    i: usize,
    j: usize,
    sampling: &PairSampling,
) -> Result<Vec<f64>> {
    check_inputs(x, assignment, model)?;
    let members = members_of(assignment, model.n_components());
    for c in [i, j] {
        if c >= members.len() || members[c].is_empty() {
            return Err(Error::EmptyCluster(c));
        }
    }
    let s_inv = regularized_inverse(&model.components[j].covariance, sampling.ridge)?;
    Ok(directed_sample(x, &members[i], &members[j], i == j, &s_inv, sampling, (i, j)))
}

/// Symmetrized intercluster distance: the larger of the two directed
/// 5th percentiles.
pub fn intercluster_distance(sample_ij: &[f64], sample_ji: &[f64]) -> Result<f64> {
    if sample_ij.is_empty() || sample_ji.is_empty() {
        return Err(Error::Domain("intercluster distance needs two non-empty samples".into()));
    }
    if sample_ij.iter().chain(sample_ji).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pair sample".into()));
    }
    let a = percentile_in_place(&mut sample_ij.to_vec(), PAIR_PERCENTILE);
    let b = percentile_in_place(&mut sample_ji.to_vec(), PAIR_PERCENTILE);
    Ok(a.max(b))
}

/// Builds `R` over all clusters that received at least one point.
///
/// Returns [`Error::SingleCluster`] when fewer than two clusters are
/// non-empty.
pub fn cluster_distance_matrix(
    x: &DataMatrix,
    assignment: &HardAssignment,
    model: &MixtureModel,
    sampling: &PairSampling,
) -> Result<ClusterDistanceMatrix> {
    check_inputs(x, assignment, model)?;
    let members = members_of(assignment, model.n_components());
    let components: Vec<usize> = (0..members.len()).filter(|&c| !members[c].is_empty()).collect();
    let size = components.len();
    if size < 2 {
        return Err(Error::SingleCluster);
    }
    let inverses = components
        .iter()
        .map(|&c| regularized_inverse(&model.components[c].covariance, sampling.ridge))
        .collect::<Result<Vec<_>>>()?;

    let ordered: Vec<(usize, usize)> = (0..size)
        .flat_map(|a| (0..size).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let directed: Vec<f64> = ordered
        .par_iter()
        .map(|&(a, b)| {
            let (ca, cb) = (components[a], components[b]);
            let mut s = directed_sample(x, &members[ca], &members[cb], false, &inverses[b], sampling, (ca, cb));
            percentile_in_place(&mut s, PAIR_PERCENTILE)
        })
        .collect();

    let mut grid = vec![0.0; size * size];
    for (&(a, b), &p) in ordered.iter().zip(&directed) {
        grid[a * size + b] = p;
    }
    let mut entries = vec![0.0; size * size];
    for a in 0..size {
        for b in a + 1..size {
            let r = grid[a * size + b].max(grid[b * size + a]);
            entries[a * size + b] = r;
            entries[b * size + a] = r;
        }
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cluster distance matrix".into()));
    }
    Ok(ClusterDistanceMatrix {
        size,
        entries,
        member_counts: components.iter().map(|&c| members[c].len()).collect(),
        components,
    })
}

/// Percentile `q` of each non-empty cluster's within-cluster sample, or
/// `None` for clusters with fewer than two points. Diagnostics only.
pub fn within_cluster_percentiles(
    x: &DataMatrix,
    assignment: &HardAssignment,
    model: &MixtureModel,
    q: f64,
    sampling: &PairSampling,
) -> Result<Vec<Option<f64>>> {
    check_inputs(x, assignment, model)?;
    let members = members_of(assignment, model.n_components());
    (0..members.len())
        .into_par_iter()
        .map(|c| {
            if members[c].len() < 2 {
                return Ok(None);
            }
            let s_inv = regularized_inverse(&model.components[c].covariance, sampling.ridge)?;
            let mut s = directed_sample(x, &members[c], &members[c], true, &s_inv, sampling, (c, c));
            Ok(Some(percentile_in_place(&mut s, q)))
        })
        .collect()
}
