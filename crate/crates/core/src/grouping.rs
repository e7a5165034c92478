//! Grouping clusters into superclusters: the epsilon schedule, DBSCAN over a
//! precomputed distance matrix, supercluster distances and the matrix
//! quality criterion (MC).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::distance::ClusterDistanceMatrix;
use crate::error::{Error, Result};
use crate::numerics::{chi_squared_cdf, chi_squared_quantile};

/// Strictly increasing DBSCAN radii, one per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule(Vec<f64>);

impl EpsilonSchedule {
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

/// Surjective map from cluster index to supercluster id `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SuperclusterPartition {
    map: Vec<usize>,
    count: usize,
}

impl SuperclusterPartition {
    /// Relabels arbitrary group ids so that ids appear in order of first
    /// occurrence.
    pub fn from_groups(groups: &[usize]) -> Self {
        let mut seen = std::collections::HashMap::new();
        let map = groups
            .iter()
            .map(|g| {
                let next = seen.len();
                *seen.entry(*g).or_insert(next)
            })
            .collect();
        Self { map, count: seen.len() }
    }

    /// Everything in one supercluster.
    pub fn single(n_clusters: usize) -> Self {
        Self { map: vec![0; n_clusters], count: usize::from(n_clusters > 0) }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn n_clusters(&self) -> usize {
        self.map.len()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn supercluster_of(&self, cluster: usize) -> usize {
        self.map[cluster]
    }

    /// Cluster indices of each supercluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (c, &s) in self.map.iter().enumerate() {
            out[s].push(c);
        }
        out
    }
}

impl TryFrom<Vec<usize>> for SuperclusterPartition {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        let p = Self::from_groups(&map);
        if p.map != map {
            return Err(Error::Malformed(
                "supercluster ids must be 0..count in order of first occurrence".into(),
            ));
        }
        Ok(p)
    }
}

impl From<SuperclusterPartition> for Vec<usize> {
    fn from(p: SuperclusterPartition) -> Self {
        p.map
    }
}

/// Minimum cluster distance between every pair of superclusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperDistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl SuperDistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Domain("supercluster distance matrix must be square".into()));
        }
        Ok(Self { size, entries: rows.concat() })
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
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub epsilon: f64,
    pub n_superclusters: usize,
    pub mc: f64,
}

/// Per-iteration record of the superclustering search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McTrace(pub Vec<McRecord>);

impl McTrace {
    pub fn records(&self) -> &[McRecord] {
        &self.0
    }

    pub(crate) fn push(&mut self, record: McRecord) {
        debug_assert!(self.0.last().is_none_or(|r| r.epsilon < record.epsilon));
        self.0.push(record);
    }
}

/// Midpoints between consecutive unique positive distances (starting from
/// zero), followed by the largest distance itself so that the last entry
/// always merges everything.
pub fn epsilon_schedule(r: &ClusterDistanceMatrix) -> Result<EpsilonSchedule> {
    let mut values: Vec<f64> = (0..r.len())
        .flat_map(|i| (0..r.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| r.get(i, j))
        .filter(|&v| v > 0.0)
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let Some(&largest) = values.last() else {
        return Err(Error::DegenerateMatrix);
    };
    let mut schedule = Vec::with_capacity(values.len() + 1);
    let mut prev = 0.0;
    for &v in &values {
        schedule.push(0.5 * (prev + v));
        prev = v;
    }
    schedule.push(largest);
    Ok(EpsilonSchedule(schedule))
}

/// DBSCAN over objects `0..n` with neighborhoods `{m : R[n][m] <= eps}`.
/// Returns `None` for noise objects. Core objects need at least `min_pts`
/// neighbors, counting themselves.
pub fn dbscan_labels(r: &ClusterDistanceMatrix, eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = r.len();
    let neighbors = |i: usize| (0..n).filter(move |&j| r.get(i, j) <= eps);
    let core: Vec<bool> = (0..n).map(|i| neighbors(i).count() >= min_pts).collect();
    let mut labels = vec![None; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start].is_some() || !core[start] {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors(p) {
                if labels[q].is_none() {
                    labels[q] = Some(next);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// DBSCAN partition of the clusters of `r`. Noise objects (possible only
/// with `min_pts > 1`) become singleton superclusters.
pub fn dbscan_precomputed(
    r: &ClusterDistanceMatrix,
    eps: f64,
    min_pts: usize,
) -> Result<SuperclusterPartition> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if min_pts < 1 {
        return Err(Error::Domain("min_pts must be at least 1".into()));
    }
    let labels = dbscan_labels(r, eps, min_pts);
    let n_groups = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut noise = n_groups;
    let groups: Vec<usize> = labels
        .into_iter()
        .map(|l| {
            l.unwrap_or_else(|| {
                noise += 1;
                noise - 1
            })
        })
        .collect();
    Ok(SuperclusterPartition::from_groups(&groups))
}

/// `D[i][j]` = minimum of `R` over member clusters of superclusters `i`, `j`.
pub fn super_distance_matrix(
    r: &ClusterDistanceMatrix,
    p: &SuperclusterPartition,
) -> Result<SuperDistanceMatrix> {
    if p.n_clusters() != r.len() {
        return Err(Error::DimensionMismatch { expected: r.len(), found: p.n_clusters() });
    }
    let s = p.count();
    let mut entries = vec![f64::INFINITY; s * s];
    for a in 0..r.len() {
        for b in 0..r.len() {
            let (i, j) = (p.supercluster_of(a), p.supercluster_of(b));
            if i != j {
                let e = &mut entries[i * s + j];
                *e = e.min(r.get(a, b));
            }
        }
    }
    for i in 0..s {
        entries[i * s + i] = 0.0;
    }
    Ok(SuperDistanceMatrix { size: s, entries })
}

/// Separability threshold `sqrt(2 Q_{1 - alpha})` of the chi-squared
/// distribution with `d` degrees of freedom.
pub fn delta_d(alpha: f64, d: usize) -> Result<f64> {
    let k = u32::try_from(d).map_err(|_| Error::Domain(format!("dimension {d} too large")))?;
    Ok((2.0 * chi_squared_quantile(1.0 - alpha, k)?).sqrt())
}

/// Fraction of superclusters whose nearest neighbor lies farther than
/// `delta_d`. A lone supercluster scores 1.
pub fn mc(dm: &SuperDistanceMatrix, delta_d: f64) -> f64 {
    let s = dm.len();
    if s <= 1 {
        return 1.0;
    }
    let separated = (0..s)
        .filter(|&i| {
            let nearest = (0..s).filter(|&j| j != i).map(|j| dm.get(i, j)).fold(f64::INFINITY, f64::min);
            nearest > delta_d
        })
        .count();
    separated as f64 / s as f64
}

/// One-sided p-value of a supercluster distance under the within-cluster
/// null where `D^2 / 2 ~ chi^2(d)`.
pub fn separation_p_value(distance: f64, d: usize) -> Result<f64> {
    let k = u32::try_from(d).map_err(|_| Error::Domain(format!("dimension {d} too large")))?;
    Ok(1.0 - chi_squared_cdf(distance * distance / 2.0, k)?)
}

/// MC through p-values: fraction of superclusters whose largest p-value
/// against any other supercluster is below `alpha`.
pub fn mc_p_value(dm: &SuperDistanceMatrix, alpha: f64, d: usize) -> Result<f64> {
    let s = dm.len();
    if s <= 1 {
        return Ok(1.0);
    }
    let mut separated = 0;
    for i in 0..s {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..s).filter(|&j| j != i) {
            worst = worst.max(separation_p_value(dm.get(i, j), d)?);
        }
        if worst < alpha {
            separated += 1;
        }
    }
    Ok(separated as f64 / s as f64)
}
