//! End-to-end GMSDB fitting and prediction.
//!
//! 1. Fit mixtures for every component count in `n_min..=n_max` and keep the
//!    BIC-optimal one.
//! 2. Hard-assign the training points and build the intercluster distance
//!    matrix `R` from Mahalanobis pair samples.
//! 3. Walk the epsilon schedule from small to large: DBSCAN the clusters,
//!    compute the supercluster distance matrix and its MC value, and stop at
//!    the first radius where MC reaches 1.
//!
//! Prediction sums mixture responsibilities over the member clusters of each
//! supercluster.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::distance::{cluster_distance_matrix, PairSampling, DEFAULT_PAIR_CAP};
use crate::error::{Error, Result};
use crate::gmm::{argmax, hard_assign, responsibilities, select_by_bic, BicPoint, EmConfig, MixtureModel};
use crate::grouping::{
    dbscan_precomputed, delta_d, epsilon_schedule, mc, super_distance_matrix, McRecord, McTrace,
    SuperclusterPartition,
};
use crate::numerics::DEFAULT_RIDGE;
use crate::seed::derive_seed;

pub const MODEL_FORMAT: &str = "gmsdb-model";
pub const MODEL_VERSION: u32 = 1;

/// DBSCAN `min_pts` used when grouping clusters.
const GROUPING_MIN_PTS: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmsdbConfig {
    /// Significance level of the separability test.
    pub alpha: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Seeded EM runs per component count.
    pub restarts: usize,
    /// Pair budget per ordered cluster pair.
    pub pair_cap: usize,
    pub ridge: f64,
    pub seed: u64,
    /// Stop after this many consecutive radii yielding one supercluster.
    pub single_cluster_patience: usize,
    /// Keep walking the schedule after MC reaches 1 (trace only; the chosen
    /// radius does not change).
    pub trace_after_exit: bool,
    pub em_max_iter: usize,
    pub em_tol: f64,
}

impl Default for GmsdbConfig {
    fn default() -> Self {
        let em = EmConfig::default();
        Self {
            alpha: 0.1,
            n_min: 2,
            n_max: 50,
            restarts: 3,
            pair_cap: DEFAULT_PAIR_CAP,
            ridge: DEFAULT_RIDGE,
            seed: 0,
            single_cluster_patience: 10,
            trace_after_exit: false,
            em_max_iter: em.max_iter,
            em_tol: em.tol,
        }
    }
}

impl GmsdbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_min < 2 || self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= n_min <= n_max, got {}..={}",
                self.n_min, self.n_max
            )));
        }
        if self.restarts < 1 || self.single_cluster_patience < 1 || self.pair_cap < 1 {
            return Err(Error::InvalidArgument(
                "restarts, pair_cap and patience must be at least 1".into(),
            ));
        }
        if !(self.ridge >= 0.0) || !(self.em_tol >= 0.0) || self.em_max_iter < 1 {
            return Err(Error::InvalidArgument("invalid EM settings".into()));
        }
        Ok(())
    }

    fn em(&self) -> EmConfig {
        EmConfig { max_iter: self.em_max_iter, tol: self.em_tol, ridge: self.ridge }
    }
}

/// Which fitted components survived hard assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRemap {
    /// Component count that minimized BIC (after EM drops).
    pub fitted_components: usize,
    /// Fitted component index of each retained cluster.
    pub retained: Vec<usize>,
    /// Fitted components that received no training points.
    pub dropped: Vec<usize>,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub mixture: f64,
    pub distances: f64,
    pub grouping: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmsdbModel {
    /// Retained mixture components, weights renormalized.
    pub mixture: MixtureModel,
    pub partition: SuperclusterPartition,
    /// Radius that produced `partition`; `None` when fewer than two clusters
    /// survived and no search took place.
    pub chosen_epsilon: Option<f64>,
    pub delta_d: f64,
    pub alpha: f64,
    pub mc_trace: McTrace,
    pub cluster_remap: ClusterRemap,
    pub bic_curve: Vec<BicPoint>,
    pub config: GmsdbConfig,
    /// Not persisted: timings vary between otherwise identical runs.
    #[serde(skip)]
    pub stage_timings: StageTimings,
}

/// Per-point supercluster probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperclusterProbabilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl SuperclusterProbabilities {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_superclusters(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.k)
    }
}

/// Index into `trace` of the selected iteration: the first with MC = 1, or
/// else the one maximizing MC, then supercluster count, then the smallest
/// radius.
pub fn select_iteration(trace: &McTrace) -> Option<usize> {
    let records = trace.records();
    if let Some(i) = records.iter().position(|r| r.mc == 1.0) {
        return Some(i);
    }
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let b = &records[b];
                r.mc > b.mc
                    || (r.mc == b.mc && r.n_superclusters > b.n_superclusters)
                    || (r.mc == b.mc && r.n_superclusters == b.n_superclusters && r.epsilon < b.epsilon)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

struct Search {
    trace: McTrace,
    partition: SuperclusterPartition,
    epsilon: f64,
}

fn search_superclusters(
    r: &crate::distance::ClusterDistanceMatrix,
    threshold: f64,
    config: &GmsdbConfig,
) -> Result<Search> {
    let schedule = epsilon_schedule(r)?;
    let mut trace = McTrace::default();
    let mut partitions = Vec::with_capacity(schedule.len());
    let mut exited = false;
    let mut single_streak = 0;
    for &eps in schedule.values() {
        let p = dbscan_precomputed(r, eps, GROUPING_MIN_PTS)?;
        let dm = super_distance_matrix(r, &p)?;
        let value = mc(&dm, threshold);
        trace.push(McRecord { epsilon: eps, n_superclusters: p.count(), mc: value });
        let single = p.count() == 1;
        partitions.push(p);
        if value == 1.0 && !exited {
            exited = true;
            if !config.trace_after_exit {
                break;
            }
        }
        single_streak = if single { single_streak + 1 } else { 0 };
        if single_streak >= config.single_cluster_patience {
            break;
        }
    }
    let chosen = select_iteration(&trace).expect("schedule is never empty");
    Ok(Search {
        epsilon: trace.records()[chosen].epsilon,
        partition: partitions.swap_remove(chosen),
        trace,
    })
}

/// Runs the full algorithm on `x`.
pub fn fit(x: &DataMatrix, config: &GmsdbConfig) -> Result<GmsdbModel> {
    config.validate()?;
    if x.n() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 points, got {}", x.n())));
    }
    let started = Instant::now();
    let n_max = config.n_max.min(x.n());
    let n_min = config.n_min.min(n_max);
    let threshold = delta_d(config.alpha, x.d())?;

    let selection = select_by_bic(x, n_min, n_max, config.restarts, config.seed, &config.em())?;
    let mixture_secs = started.elapsed().as_secs_f64();

    let stage2 = Instant::now();
    let fitted = selection.model;
    let assignment = hard_assign(&responsibilities(&fitted, x)?);
    let sampling = PairSampling {
        cap: config.pair_cap,
        ridge: config.ridge,
        seed: derive_seed(config.seed, &[crate::seed::STREAM_PAIRS]),
    };
    let distances = match cluster_distance_matrix(x, &assignment, &fitted, &sampling) {
        Ok(r) => Some(r),
        Err(Error::SingleCluster) => None,
        Err(e) => return Err(e),
    };
    let distance_secs = stage2.elapsed().as_secs_f64();

    let stage3 = Instant::now();
    let retained: Vec<usize> = match &distances {
        Some(r) => r.components().to_vec(),
        None => {
            let mut used = assignment.0.clone();
            used.sort_unstable();
            used.dedup();
            used
        }
    };
    let search = match &distances {
        Some(r) => match search_superclusters(r, threshold, config) {
            Ok(s) => Some(s),
            Err(Error::DegenerateMatrix) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let (partition, chosen_epsilon, mc_trace) = match search {
        Some(s) => (s.partition, Some(s.epsilon), s.trace),
        None => (SuperclusterPartition::single(retained.len()), None, McTrace::default()),
    };
    let grouping_secs = stage3.elapsed().as_secs_f64();

    let dropped = (0..fitted.n_components()).filter(|c| !retained.contains(c)).collect();
    let mixture = fitted.retain_components(&retained);
    Ok(GmsdbModel {
        cluster_remap: ClusterRemap { fitted_components: fitted.n_components(), retained, dropped },
        mixture,
        partition,
        chosen_epsilon,
        delta_d: threshold,
        alpha: config.alpha,
        mc_trace,
        bic_curve: selection.curve,
        config: config.clone(),
        stage_timings: StageTimings {
            mixture: mixture_secs,
            distances: distance_secs,
            grouping: grouping_secs,
            total: started.elapsed().as_secs_f64(),
        },
    })
}

impl GmsdbModel {
    pub fn n_superclusters(&self) -> usize {
        self.partition.count()
    }

    pub fn dim(&self) -> usize {
        self.mixture.d
    }

    /// Component count chosen by BIC.
    pub fn n_bic(&self) -> usize {
        self.cluster_remap.fitted_components
    }
}

/// Supercluster probabilities: component responsibilities summed over each
/// supercluster's members.
pub fn predict_soft(model: &GmsdbModel, x: &DataMatrix) -> Result<SuperclusterProbabilities> {
    let resp = responsibilities(&model.mixture, x)?;
    let k = model.partition.count();
    let mut values = vec![0.0; x.n() * k];
    for (row, out) in resp.rows().zip(values.chunks_exact_mut(k)) {
        for (c, p) in row.iter().enumerate() {
            out[model.partition.supercluster_of(c)] += p;
        }
    }
    Ok(SuperclusterProbabilities { n: x.n(), k, values })
}

/// Most probable supercluster per point; ties go to the lowest id.
pub fn predict_hard(model: &GmsdbModel, x: &DataMatrix) -> Result<Vec<usize>> {
    Ok(predict_soft(model, x)?.rows().map(argmax).collect())
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    format: &'a str,
    version: u32,
    model: &'a GmsdbModel,
}

#[derive(Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct ModelFileIn {
    model: GmsdbModel,
}

fn check_finite(model: &GmsdbModel) -> Result<()> {
    let mut values: Vec<(&str, f64)> = vec![
        ("delta_d", model.delta_d),
        ("alpha", model.alpha),
        ("log_likelihood", model.mixture.log_likelihood),
        ("bic", model.mixture.bic),
    ];
    values.extend(model.chosen_epsilon.map(|e| ("chosen_epsilon", e)));
    for c in &model.mixture.components {
        values.push(("weight", c.weight));
        values.extend(c.mean.iter().map(|&v| ("mean", v)));
        values.extend(c.covariance.as_matrix().iter().map(|&v| ("covariance", v)));
    }
    values.extend(model.mixture.diagnostics.log_likelihood_trace.iter().map(|&v| ("likelihood trace", v)));
    for r in model.mc_trace.records() {
        values.push(("mc trace", r.epsilon));
        values.push(("mc trace", r.mc));
    }
    for p in &model.bic_curve {
        values.push(("bic curve", p.bic));
        values.push(("bic curve", p.log_likelihood));
    }
    match values.into_iter().find(|(_, v)| !v.is_finite()) {
        Some((field, _)) => Err(Error::NonFinite(field.into())),
        None => Ok(()),
    }
}

/// Serializes `model` into the versioned text format.
pub fn model_to_string(model: &GmsdbModel) -> Result<String> {
    check_finite(model)?;
    let out = ModelFileOut { format: MODEL_FORMAT, version: MODEL_VERSION, model };
    let mut text = serde_json::to_string_pretty(&out).map_err(|e| Error::Malformed(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parses and validates a model document.
pub fn model_from_str(text: &str) -> Result<GmsdbModel> {
    let header: ModelHeader = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Malformed(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::VersionMismatch { found: header.version, expected: MODEL_VERSION });
    }
    let file: ModelFileIn = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    let model = file.model;
    check_finite(&model)?;
    model.mixture.validate()?;
    if model.partition.n_clusters() != model.mixture.n_components() {
        return Err(Error::Malformed(format!(
            "partition covers {} clusters but mixture has {}",
            model.partition.n_clusters(),
            model.mixture.n_components()
        )));
    }
    if model.cluster_remap.retained.len() != model.mixture.n_components() {
        return Err(Error::Malformed("cluster remap disagrees with mixture".into()));
    }
    if model.delta_d != delta_d(model.alpha, model.mixture.d)? {
        return Err(Error::Malformed("delta_d does not match alpha and dimension".into()));
    }
    Ok(model)
}

pub fn save_model(model: &GmsdbModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmsdbModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epsilon: f64, n_superclusters: usize, mc: f64) -> McRecord {
        McRecord { epsilon, n_superclusters, mc }
    }

    #[test]
    fn selection_prefers_first_perfect_mc() {
        let t = McTrace(vec![rec(1.0, 4, 0.5), rec(2.0, 3, 1.0), rec(3.0, 2, 1.0)]);
        assert_eq!(select_iteration(&t), Some(1));
    }

    #[test]
    fn fallback_maximizes_mc_then_count_then_smallest_radius() {
        let t = McTrace(vec![rec(1.0, 5, 0.4), rec(2.0, 4, 0.75), rec(3.0, 3, 0.75), rec(4.0, 2, 0.5)]);
        assert_eq!(select_iteration(&t), Some(1));
        let t = McTrace(vec![rec(1.0, 4, 0.5), rec(2.0, 4, 0.5), rec(3.0, 2, 0.5)]);
        assert_eq!(select_iteration(&t), Some(0));
        assert_eq!(select_iteration(&McTrace::default()), None);
    }

    #[test]
    fn config_validation() {
        assert!(GmsdbConfig::default().validate().is_ok());
        assert!(GmsdbConfig { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(GmsdbConfig { n_min: 1, ..Default::default() }.validate().is_err());
        assert!(GmsdbConfig { n_min: 6, n_max: 5, ..Default::default() }.validate().is_err());
        assert!(GmsdbConfig { single_cluster_patience: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn fit_needs_two_points() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(fit(&x, &GmsdbConfig::default()).is_err());
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(model_from_str("{\"format\": \"gmsdb-model\""), Err(Error::Malformed(_))));
        assert!(matches!(
            model_from_str("{\"format\": \"gmsdb-model\", \"version\": 99, \"model\": {}}"),
            Err(Error::VersionMismatch { found: 99, .. })
        ));
        assert!(matches!(
            model_from_str("{\"format\": \"other\", \"version\": 1, \"model\": {}}"),
            Err(Error::Malformed(_))
        ));
    }
}
