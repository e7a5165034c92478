//! Scalar statistical primitives: chi-squared quantiles, percentiles,
//! Mahalanobis distances and regularized inversion of symmetric matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative ridge added before inverting covariance matrices.
pub const DEFAULT_RIDGE: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-12;

/// Dense symmetric `d x d` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m`, checking it is square, finite and symmetric to 1e-12 relative.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Domain(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix".into()));
        }
        let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::Domain(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds a matrix from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Domain("rows do not form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)))
    }

    /// Symmetrizes `m` as `(m + m^T) / 2` without validation.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    /// `x^T M x` for a vector of matching dimension.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.0[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.to_rows()
    }
}

/// Lower Cholesky factor stored row-major, for repeated quadratic forms
/// against the same covariance.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    d: usize,
    lower: Vec<f64>,
    inv_diag: Vec<f64>,
    log_det: f64,
}

impl CholeskyFactor {
    /// Factors `s` directly. Fails if `s` is not positive definite.
    pub fn new(s: &SymmetricMatrix) -> Result<Self> {
        let d = s.dim();
        let chol = s.as_matrix().clone().cholesky().ok_or(Error::SingularMatrix)?;
        let l = chol.l();
        let mut lower = vec![0.0; d * d];
        let mut log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                lower[i * d + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::SingularMatrix);
        }
        let inv_diag = (0..d).map(|i| 1.0 / lower[i * d + i]).collect();
        Ok(Self { d, lower, inv_diag, log_det })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Natural log of the determinant of the factored matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Squared Mahalanobis distance `(x - y)^T S^{-1} (x - y)` via forward
    /// substitution. `scratch` must hold at least `d` values.
    pub fn distance_sq(&self, x: &[f64], y: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        let scratch = &mut scratch[..d];
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let mut v = x[i] - y[i];
            for (l, s) in row.iter().zip(&scratch[..i]) {
                v -= l * s;
            }
            v *= self.inv_diag[i];
            scratch[i] = v;
            acc += v * v;
        }
        acc
    }
}

/// Natural log of the gamma function (Lanczos, g = 7), for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn regularized_lower_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!("incomplete gamma needs a > 0, x >= 0 (a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        Ok((sum * log_prefactor.exp()).clamp(0.0, 1.0))
    } else {
        // Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok((1.0 - log_prefactor.exp() * h).clamp(0.0, 1.0))
    }
}

/// CDF of the chi-squared distribution with `k` degrees of freedom.
pub fn chi_squared_cdf(x: f64, k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("chi-squared needs k >= 1".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    regularized_lower_gamma(f64::from(k) / 2.0, x / 2.0)
}

/// Quantile `Q_p` of the chi-squared distribution with `k` degrees of freedom.
///
/// Bisection on the regularized incomplete gamma function over the bracket
/// `[0, k + 40 sqrt(2k)]`, stopping when the bracket is narrower than 1e-10.
pub fn chi_squared_quantile(p: f64, k: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile probability must lie in (0, 1), got {p}")));
    }
    if k < 1 {
        return Err(Error::Domain("chi-squared needs k >= 1".into()));
    }
    let kf = f64::from(k);
    let mut lo = 0.0;
    let mut hi = kf + 40.0 * (2.0 * kf).sqrt();
    while chi_squared_cdf(hi, k)? < p {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if chi_squared_cdf(mid, k)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Linear-interpolation percentile with rank `(q / 100) (n - 1)`.
pub fn percentile(sample: &[f64], q: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Domain("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Domain(format!("percentile must lie in [0, 100], got {q}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("percentile sample".into()));
    }
    let mut sorted = sample.to_vec();
    Ok(percentile_in_place(&mut sorted, q))
}

/// Same as [`percentile`] but reorders `sample` instead of copying it.
/// Caller guarantees a non-empty, finite sample.
pub(crate) fn percentile_in_place(sample: &mut [f64], q: f64) -> f64 {
    let n = sample.len();
    if n == 1 {
        return sample[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, lo_val, upper) = sample.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if frac == 0.0 || upper.is_empty() {
        return lo_val;
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

/// Mahalanobis distance `sqrt((x - y)^T S^{-1} (x - y))` given `S^{-1}`.
pub fn mahalanobis(x: &[f64], y: &[f64], s_inv: &SymmetricMatrix) -> Result<f64> {
    let d = s_inv.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    if y.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: y.len() });
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(s_inv.quadratic_form(&diff).max(0.0).sqrt())
}

/// Adds `ridge * trace(s) / d` to the diagonal of `s`.
pub fn regularized(s: &SymmetricMatrix, ridge: f64) -> SymmetricMatrix {
    let d = s.dim();
    let shift = ridge * s.trace() / d as f64;
    let mut m = s.as_matrix().clone();
    for i in 0..d {
        m[(i, i)] += shift;
    }
    SymmetricMatrix(m)
}

/// `(s + ridge * trace(s) / d * I)^{-1}` via Cholesky factorization.
pub fn regularized_inverse(s: &SymmetricMatrix, ridge: f64) -> Result<SymmetricMatrix> {
    if !(ridge >= 0.0) {
        return Err(Error::Domain(format!("ridge must be nonnegative, got {ridge}")));
    }
    let m = regularized(s, ridge);
    let chol = m.0.cholesky().ok_or(Error::SingularMatrix)?;
    let inv = chol.inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    Ok(SymmetricMatrix::symmetrized(inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chi_squared_quantile_closed_forms() {
        assert_abs_diff_eq!(chi_squared_quantile(0.9, 2).unwrap(), -2.0 * 0.1_f64.ln(), epsilon = 1e-8);
        assert_abs_diff_eq!(chi_squared_quantile(0.9, 2).unwrap(), 4.60517019, epsilon = 1e-8);
        assert_abs_diff_eq!(chi_squared_quantile(0.5, 2).unwrap(), 1.38629436, epsilon = 1e-8);
        // square of the standard normal 0.95 quantile
        let z = 1.644_853_626_951_472_2_f64;
        assert_abs_diff_eq!(chi_squared_quantile(0.9, 1).unwrap(), z * z, epsilon = 1e-8);
        assert_abs_diff_eq!(chi_squared_quantile(0.9, 1).unwrap(), 2.70554345, epsilon = 1e-8);
    }

    #[test]
    fn chi_squared_quantile_inverts_cdf() {
        for k in [1, 2, 3, 5, 10, 30] {
            for p in [0.01, 0.1, 0.5, 0.9, 0.99] {
                let q = chi_squared_quantile(p, k).unwrap();
                assert_abs_diff_eq!(chi_squared_cdf(q, k).unwrap(), p, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn chi_squared_quantile_monotone_on_grid() {
        for k in [1, 2, 4, 7] {
            let qs: Vec<f64> = (1..=99)
                .map(|i| chi_squared_quantile(i as f64 / 100.0, k).unwrap())
                .collect();
            assert!(qs.windows(2).all(|w| w[1] > w[0]), "k = {k}");
        }
    }

    #[test]
    fn chi_squared_quantile_domain() {
        assert!(chi_squared_quantile(0.0, 2).is_err());
        assert!(chi_squared_quantile(1.0, 2).is_err());
        assert!(chi_squared_quantile(0.5, 0).is_err());
        assert!(chi_squared_quantile(f64::NAN, 2).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(5.0), 24.0_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-12);
    }

    #[test]
    fn percentile_examples() {
        assert_abs_diff_eq!(percentile(&[10.0, 20.0], 5.0).unwrap(), 10.5, epsilon = 1e-12);
        assert_eq!(percentile(&[7.0], 5.0).unwrap(), 7.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0).unwrap(), 2.0);
        assert!(percentile(&[], 5.0).is_err());
    }

    #[test]
    fn percentile_extremes_are_min_and_max() {
        let s = [4.0, -1.0, 9.5, 3.0, 3.0, 0.25];
        assert_eq!(percentile(&s, 0.0).unwrap(), -1.0);
        assert_eq!(percentile(&s, 100.0).unwrap(), 9.5);
    }

    #[test]
    fn mahalanobis_examples() {
        let id = SymmetricMatrix::identity(2);
        assert_eq!(mahalanobis(&[1.0, 0.0], &[0.0, 0.0], &id).unwrap(), 1.0);
        let s_inv = SymmetricMatrix::diagonal(&[0.25, 1.0]);
        assert_abs_diff_eq!(mahalanobis(&[2.0, 0.0], &[0.0, 0.0], &s_inv).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(mahalanobis(&[1.5, -2.0], &[1.5, -2.0], &s_inv).unwrap(), 0.0);
        assert!(matches!(
            mahalanobis(&[1.0], &[0.0, 0.0], &id),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cholesky_distance_matches_inverse() {
        let s = SymmetricMatrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let inv = regularized_inverse(&s, 0.0).unwrap();
        let f = CholeskyFactor::new(&s).unwrap();
        let mut scratch = [0.0; 2];
        let x = [1.3, -0.4];
        let y = [-0.2, 0.9];
        let a = f.distance_sq(&x, &y, &mut scratch);
        let b = mahalanobis(&x, &y, &inv).unwrap().powi(2);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert_abs_diff_eq!(f.log_det(), (2.0_f64 - 0.36).ln(), epsilon = 1e-12);
    }

    #[test]
    fn regularized_inverse_examples() {
        assert_eq!(
            regularized_inverse(&SymmetricMatrix::identity(3), 0.0).unwrap(),
            SymmetricMatrix::identity(3)
        );
        let inv = regularized_inverse(&SymmetricMatrix::diagonal(&[2.0, 4.0]), 0.0).unwrap();
        assert_abs_diff_eq!(inv.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.get(1, 1), 0.25, epsilon = 1e-15);
        assert_eq!(inv.get(0, 1), 0.0);
    }

    #[test]
    fn regularized_inverse_rank_deficient() {
        let s = SymmetricMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(regularized_inverse(&s, 0.0).is_err());
        let inv = regularized_inverse(&s, 1e-6).unwrap();
        assert!(inv.as_matrix().iter().all(|v| v.is_finite()));
        assert!(inv.as_matrix().clone().cholesky().is_some());
        let product = regularized(&s, 1e-6).as_matrix() * inv.as_matrix();
        let err = (product - DMatrix::<f64>::identity(2, 2)).norm();
        assert!(err < 1e-6, "frobenius error {err}");
    }

    #[test]
    fn symmetric_matrix_rejects_asymmetry() {
        assert!(SymmetricMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(SymmetricMatrix::from_rows(&[vec![1.0, f64::NAN], vec![f64::NAN, 1.0]]).is_err());
    }
}
