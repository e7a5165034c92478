//! Gaussian mixtures with full covariances: EM fitting, BIC scoring and
//! selection of the component count.
//!
//! Covariances are kept above an eigenvalue floor `ridge * trace(C) / d`,
//! where `C` is the global sample covariance. The M-step computes the exact
//! constrained maximizer (eigenvalues of the weighted scatter clamped at the
//! floor), so every EM iteration is a proper EM step and the log-likelihood
//! never decreases.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::{CholeskyFactor, SymmetricMatrix, DEFAULT_RIDGE};
use crate::seed::{derive_seed, stream, STREAM_FIT};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// EM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    /// Relative covariance floor, scaled by the mean variance of the data.
    pub ridge: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, ridge: DEFAULT_RIDGE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: SymmetricMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub requested_components: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after initialization and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Trace indices at which degenerate components were removed. The
    /// likelihood may drop across these indices only.
    pub drops: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub components: Vec<GaussianComponent>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n: usize,
    pub d: usize,
    pub diagnostics: FitDiagnostics,
}

/// Row-stochastic `n x k` matrix of component membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.k)
    }
}

/// Component label per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardAssignment(pub Vec<usize>);

impl HardAssignment {
    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    /// Point indices grouped by label, for labels `0..k`.
    pub fn members(&self, k: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); k];
        for (i, &l) in self.0.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}

/// Free parameters of a full-covariance mixture: weights, means, covariances.
pub fn parameter_count(n_components: usize, d: usize) -> usize {
    (n_components - 1) + n_components * d + n_components * d * (d + 1) / 2
}

/// Precomputed Cholesky factors for evaluating weighted log-densities.
pub(crate) struct Evaluator {
    d: usize,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    factors: Vec<CholeskyFactor>,
}

impl Evaluator {
    fn new(components: &[GaussianComponent]) -> Result<Self> {
        let d = components[0].mean.len();
        let factors = components
            .iter()
            .map(|c| CholeskyFactor::new(&c.covariance))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d,
            log_weights: components.iter().map(|c| c.weight.ln()).collect(),
            means: components.iter().map(|c| c.mean.clone()).collect(),
            factors,
        })
    }

    /// `ln(A_i) + ln N(x | mu_i, S_i)` for every component.
    fn log_weighted(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let base = self.d as f64 * LN_2PI;
        for (i, o) in out.iter_mut().enumerate() {
            let f = &self.factors[i];
            let m2 = f.distance_sq(x, &self.means[i], scratch);
            *o = self.log_weights[i] - 0.5 * (base + f.log_det() + m2);
        }
    }

    /// Fills `resp` with normalized responsibilities and returns the log
    /// density of `x` under the mixture.
    fn normalize_row(&self, x: &[f64], resp: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.log_weighted(x, resp, scratch);
        let max = resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in resp.iter_mut() {
            *r = (*r - max).exp();
            total += *r;
        }
        for r in resp.iter_mut() {
            *r /= total;
        }
        max + total.ln()
    }

    /// Responsibilities for every row of `x` and the total log-likelihood.
    fn e_step(&self, x: &DataMatrix, resp: &mut [f64]) -> f64 {
        let k = self.log_weights.len();
        let mut scratch = vec![0.0; self.d];
        let mut ll = 0.0;
        for (row, r) in x.rows().zip(resp.chunks_exact_mut(k)) {
            ll += self.normalize_row(row, r, &mut scratch);
        }
        ll
    }
}

impl MixtureModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub(crate) fn evaluator(&self) -> Result<Evaluator> {
        Evaluator::new(&self.components)
    }

    /// Log-likelihood of `x` under the mixture.
    pub fn log_likelihood_of(&self, x: &DataMatrix) -> Result<f64> {
        x.check_dim(self.d)?;
        let mut resp = vec![0.0; x.n() * self.n_components()];
        Ok(self.evaluator()?.e_step(x, &mut resp))
    }

    /// Copy restricted to `keep` (in order), with weights renormalized.
    pub fn retain_components(&self, keep: &[usize]) -> Self {
        let total: f64 = keep.iter().map(|&i| self.components[i].weight).sum();
        let components = keep
            .iter()
            .map(|&i| {
                let mut c = self.components[i].clone();
                c.weight /= total;
                c
            })
            .collect();
        Self { components, ..self.clone() }
    }

    /// Checks the structural invariants a fitted model must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Malformed("mixture has no components".into()));
        }
        let mut total = 0.0;
        for c in &self.components {
            if c.mean.len() != self.d || c.covariance.dim() != self.d {
                return Err(Error::Malformed("component dimension disagrees with model".into()));
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::Malformed(format!("component weight {} out of (0, 1]", c.weight)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Malformed(format!("component weights sum to {total}")));
        }
        self.evaluator().map(|_| ())
    }
}

fn sample_covariance(x: &DataMatrix, mean: &[f64]) -> DMatrix<f64> {
    let d = x.d();
    let mut cov = DMatrix::zeros(d, d);
    for row in x.rows() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    finish_scatter(&mut cov, x.n() as f64);
    cov
}

/// Divides the lower triangle by `total` and mirrors it.
fn finish_scatter(cov: &mut DMatrix<f64>, total: f64) {
    let d = cov.nrows();
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
}

/// Raises every eigenvalue of `cov` to at least `floor`. Leaves the matrix
/// untouched when it already satisfies the bound.
fn clamp_eigenvalues(cov: DMatrix<f64>, floor: f64) -> SymmetricMatrix {
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return SymmetricMatrix::symmetrized(cov);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    SymmetricMatrix::symmetrized(v * DMatrix::from_diagonal(&clamped) * v.transpose())
}

/// Picks `k` distinct seed points by D^2 sampling.
fn kmeans_plus_plus<R: Rng>(x: &DataMatrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = x.n();
    let mut centers = vec![x.row(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = x.rows().map(|r| sq_euclid(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick).to_vec();
        for (dv, row) in dist.iter_mut().zip(x.rows()) {
            *dv = dv.min(sq_euclid(row, &c));
        }
        centers.push(c);
    }
    centers
}

fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Covariance floor used by EM on `x`.
fn covariance_floor(global: &DMatrix<f64>, ridge: f64) -> f64 {
    let d = global.nrows() as f64;
    let t = global.trace();
    if t > 0.0 {
        ridge * t / d
    } else {
        ridge
    }
}

fn m_step(
    x: &DataMatrix,
    resp: &[f64],
    k: usize,
    floor: f64,
) -> Vec<Option<GaussianComponent>> {
    let n = x.n();
    let d = x.d();
    let min_weight = 1.0 / (10.0 * n as f64);
    let mut nk = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    for (row, r) in x.rows().zip(resp.chunks_exact(k)) {
        for (j, &w) in r.iter().enumerate() {
            nk[j] += w;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(row) {
                *s += w * v;
            }
        }
    }
    let means: Vec<Vec<f64>> = (0..k)
        .map(|j| sums[j * d..(j + 1) * d].iter().map(|s| s / nk[j]).collect())
        .collect();
    // lower-triangular scatter per component, packed row by row
    let tri = d * (d + 1) / 2;
    let mut scatter = vec![0.0; k * tri];
    let mut centered = vec![0.0; d];
    for (row, r) in x.rows().zip(resp.chunks_exact(k)) {
        for (j, &w) in r.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&means[j])) {
                *c = v - m;
            }
            let acc = &mut scatter[j * tri..(j + 1) * tri];
            let mut t = 0;
            for a in 0..d {
                let da = w * centered[a];
                for &cb in &centered[..=a] {
                    acc[t] += da * cb;
                    t += 1;
                }
            }
        }
    }
    means
        .into_iter()
        .enumerate()
        .map(|(j, mean)| {
            let weight = nk[j] / n as f64;
            if !(weight >= min_weight) {
                return None;
            }
            let acc = &scatter[j * tri..(j + 1) * tri];
            let mut cov = DMatrix::zeros(d, d);
            let mut t = 0;
            for a in 0..d {
                for b in 0..=a {
                    cov[(a, b)] = acc[t];
                    t += 1;
                }
            }
            finish_scatter(&mut cov, nk[j]);
            Some(GaussianComponent { weight, mean, covariance: clamp_eigenvalues(cov, floor) })
        })
        .collect()
}

/// Fits an `n_components` mixture to `x` by EM from a k-means++ start.
///
/// Components whose weight falls below `1 / (10 n)` are removed and the
/// remaining weights renormalized; the effective count is reported by
/// [`MixtureModel::n_components`].
pub fn fit_gmm(
    x: &DataMatrix,
    n_components: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<MixtureModel> {
    let n = x.n();
    if n_components < 1 {
        return Err(Error::InvalidArgument("component count must be at least 1".into()));
    }
    if n < n_components {
        return Err(Error::InvalidArgument(format!(
            "{n} points cannot support {n_components} components"
        )));
    }
    let mut rng = stream(seed, &[STREAM_FIT]);
    let global_mean = x.mean();
    let global_cov = sample_covariance(x, &global_mean);
    let floor = covariance_floor(&global_cov, config.ridge);
    let start_cov = clamp_eigenvalues(global_cov, floor);

    let seeds = kmeans_plus_plus(x, n_components, &mut rng);
    let components: Vec<GaussianComponent> = seeds
        .into_iter()
        .map(|mean| GaussianComponent {
            weight: 1.0 / n_components as f64,
            mean,
            covariance: start_cov.clone(),
        })
        .collect();
    fit_from(x, components, n_components, floor, config)
}

fn fit_from(
    x: &DataMatrix,
    mut components: Vec<GaussianComponent>,
    n_components: usize,
    floor: f64,
    config: &EmConfig,
) -> Result<MixtureModel> {
    let n = x.n();
    let d = x.d();
    let mut resp = vec![0.0; n * components.len()];
    let mut ll = Evaluator::new(&components)?.e_step(x, &mut resp);
    let mut trace = vec![ll];
    let mut drops = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let k = components.len();
        let updated = m_step(x, &resp, k, floor);
        let before = updated.len();
        components = updated.into_iter().flatten().collect();
        if components.len() < before {
            let total: f64 = components.iter().map(|c| c.weight).sum();
            components.iter_mut().for_each(|c| c.weight /= total);
            drops.push(trace.len());
            resp = vec![0.0; n * components.len()];
        }
        let prev = ll;
        ll = Evaluator::new(&components)?.e_step(x, &mut resp);
        trace.push(ll);
        if !ll.is_finite() {
            return Err(Error::NonFinite("EM log-likelihood".into()));
        }
        if drops.last() != Some(&(trace.len() - 1)) && (ll - prev).abs() < config.tol * prev.abs() {
            converged = true;
            break;
        }
    }

    let k = components.len();
    Ok(MixtureModel {
        bic: parameter_count(k, d) as f64 * (n as f64).ln() - 2.0 * ll,
        components,
        log_likelihood: ll,
        n,
        d,
        diagnostics: FitDiagnostics {
            requested_components: n_components,
            iterations,
            converged,
            log_likelihood_trace: trace,
            drops,
        },
    })
}

/// `k ln(n) - 2 ln L` of `model` evaluated on `x`.
pub fn bic(model: &MixtureModel, x: &DataMatrix) -> Result<f64> {
    let ll = model.log_likelihood_of(x)?;
    let k = parameter_count(model.n_components(), model.d) as f64;
    Ok(k * (x.n() as f64).ln() - 2.0 * ll)
}

/// One point on the BIC-vs-N curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicPoint {
    pub requested: usize,
    pub effective: usize,
    pub log_likelihood: f64,
    pub bic: f64,
}

#[derive(Debug, Clone)]
pub struct BicSelection {
    pub model: MixtureModel,
    pub curve: Vec<BicPoint>,
}

/// Fits every component count in `n_min..=n_max` with `restarts` seeded EM
/// runs each, keeps the best-likelihood run per count, and returns the one
/// with minimal BIC (ties go to the smaller count).
pub fn select_by_bic(
    x: &DataMatrix,
    n_min: usize,
    n_max: usize,
    restarts: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<BicSelection> {
    if n_min < 2 || n_min > n_max {
        return Err(Error::InvalidArgument(format!(
            "component range must satisfy 2 <= n_min <= n_max (got {n_min}..={n_max})"
        )));
    }
    if restarts < 1 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let jobs: Vec<(usize, usize)> = (n_min..=n_max)
        .flat_map(|k| (0..restarts).map(move |r| (k, r)))
        .collect();
    let fits: Vec<MixtureModel> = jobs
        .par_iter()
        .map(|&(k, r)| fit_gmm(x, k, derive_seed(seed, &[k as u64, r as u64]), config))
        .collect::<Result<_>>()?;

    let mut best: Option<MixtureModel> = None;
    let mut curve = Vec::new();
    for per_k in fits.chunks(restarts) {
        let mut top = &per_k[0];
        for m in &per_k[1..] {
            if m.log_likelihood > top.log_likelihood {
                top = m;
            }
        }
        curve.push(BicPoint {
            requested: top.diagnostics.requested_components,
            effective: top.n_components(),
            log_likelihood: top.log_likelihood,
            bic: top.bic,
        });
        if best.as_ref().is_none_or(|b| top.bic < b.bic) {
            best = Some(top.clone());
        }
    }
    Ok(BicSelection { model: best.expect("non-empty range"), curve })
}

/// Posterior component probabilities, normalized in the log domain.
pub fn responsibilities(model: &MixtureModel, x: &DataMatrix) -> Result<Responsibilities> {
    x.check_dim(model.d)?;
    let k = model.n_components();
    let mut values = vec![0.0; x.n() * k];
    model.evaluator()?.e_step(x, &mut values);
    Ok(Responsibilities { n: x.n(), k, values })
}

/// Row-wise argmax; ties go to the lowest index.
pub fn hard_assign(r: &Responsibilities) -> HardAssignment {
    HardAssignment(r.rows().map(argmax).collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
