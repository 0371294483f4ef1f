//! SPD matrices and the baseline distances and kernels defined on them.
//!
//! Every [`SpdMatrix`] carries its eigendecomposition, computed once at
//! construction with eigenvalues sorted in descending order. All spectral
//! functions (logarithm, powers, inverse square root) read that cache.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Entries closer than this (relative) to their transpose are symmetrized.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Minimum eigenvalue relative to `max(1, λ_max)` for a matrix to count as SPD.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// A dense symmetric positive definite matrix with its cached spectrum.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates `entries` and computes the eigendecomposition.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        make_spd(entries)
    }

    /// Builds `U diag(λ) Uᵀ` from an orthonormal basis and positive eigenvalues.
    ///
    /// Columns are reordered so the stored eigenvalues are descending.
    pub fn from_eigen(eigenvectors: DMatrix<f64>, eigenvalues: DVector<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        if eigenvectors.nrows() != d || eigenvectors.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: eigenvectors.ncols(),
            });
        }
        check_positive(&eigenvalues)?;
        let (eigenvalues, eigenvectors) = sort_descending(eigenvalues, eigenvectors);
        let entries = reconstruct(&eigenvectors, eigenvalues.as_slice(), |l| l);
        Ok(Self {
            entries,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
            eigenvalues: DVector::from_element(dim, 1.0),
            eigenvectors: DMatrix::identity(dim, dim),
        }
    }

    /// `diag(values)`; every value must be positive.
    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        make_spd(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors; column `i` pairs with `eigenvalues()[i]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    /// Applies a scalar function to the spectrum: `U diag(f(λ)) Uᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        reconstruct(&self.eigenvectors, self.eigenvalues.as_slice(), f)
    }

    /// Principal matrix logarithm.
    pub fn log(&self) -> DMatrix<f64> {
        self.map_spectrum(f64::ln)
    }

    pub fn powf(&self, exponent: f64) -> DMatrix<f64> {
        self.map_spectrum(|l| l.powf(exponent))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.map_spectrum(|l| 1.0 / l)
    }

    fn check_dim(&self, other: &SpdMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

/// Validates a square matrix as SPD and caches its eigendecomposition.
///
/// Asymmetry up to [`SYMMETRY_TOLERANCE`] is removed by averaging with the
/// transpose; anything larger is rejected.
pub fn make_spd(entries: DMatrix<f64>) -> Result<SpdMatrix> {
    let (rows, cols) = entries.shape();
    if rows != cols || rows == 0 {
        return Err(Error::NotSquare { rows, cols });
    }
    let mut worst = 0.0_f64;
    for i in 0..rows {
        for j in (i + 1)..cols {
            let (a, b) = (entries[(i, j)], entries[(j, i)]);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NotSymmetric {
                    asymmetry: f64::INFINITY,
                });
            }
            let excess = (a - b).abs() / a.abs().max(1.0);
            worst = worst.max(excess);
        }
    }
    if worst > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric { asymmetry: worst });
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: f64::NAN,
        });
    }
    let symmetric = (&entries + entries.transpose()) * 0.5;
    let eig = symmetric.clone().symmetric_eigen();
    check_positive(&eig.eigenvalues)?;
    let (eigenvalues, eigenvectors) = sort_descending(eig.eigenvalues, eig.eigenvectors);
    Ok(SpdMatrix {
        entries: symmetric,
        eigenvalues,
        eigenvectors,
    })
}

fn check_positive(eigenvalues: &DVector<f64>) -> Result<()> {
    let max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min.is_finite() && max.is_finite()) || min <= POSITIVITY_FLOOR * max.max(1.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

pub(crate) fn sort_descending(
    values: DVector<f64>,
    vectors: DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = values.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let sorted_values = DVector::from_iterator(d, order.iter().map(|&i| values[i]));
    let sorted_vectors = DMatrix::from_fn(d, d, |r, c| vectors[(r, order[c])]);
    (sorted_values, sorted_vectors)
}

/// `U diag(f(λ)) Uᵀ`, symmetrized.
pub(crate) fn reconstruct(u: &DMatrix<f64>, lambda: &[f64], f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = lambda.len();
    let mut scaled = u.clone();
    for (c, &l) in lambda.iter().enumerate() {
        let s = f(l);
        scaled.column_mut(c).scale_mut(s);
    }
    let mut out = &scaled * u.transpose();
    for i in 0..d {
        for j in (i + 1)..d {
            let m = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = m;
            out[(j, i)] = m;
        }
    }
    out
}

/// Sum of log-eigenvalues of a symmetric matrix assumed positive definite.
pub(crate) fn log_det_symmetric(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().map(|l| l.ln()).sum()
}

/// S-divergence `log det((X+Y)/2) − ½ log det(XY)` in its eigenvalue form.
///
/// Clamped at zero to absorb rounding when `X ≈ Y`.
pub fn s_divergence(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    x.check_dim(y)?;
    let mean = (x.entries() + y.entries()) * 0.5;
    let value = log_det_symmetric(&mean) - 0.5 * (x.log_det() + y.log_det());
    Ok(value.max(0.0))
}

/// Stein kernel `exp(−θ S(X, Y))`.
pub fn stein_kernel(x: &SpdMatrix, y: &SpdMatrix, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok((-theta * s_divergence(x, y)?).exp())
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("theta must be positive, got {theta}")));
    }
    Ok(())
}

/// The baseline SPD metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricId {
    Airm,
    Cholesky,
    Euclidean,
    LogEuclidean,
    PowerEuclidean(f64),
    SDivergenceRoot,
}

impl MetricId {
    /// Candidate ζ values for the power-Euclidean metric.
    pub const POWER_GRID: [f64; 3] = [0.25, 0.5, 1.0];

    pub fn all() -> Vec<MetricId> {
        vec![
            MetricId::Airm,
            MetricId::Cholesky,
            MetricId::Euclidean,
            MetricId::LogEuclidean,
            MetricId::PowerEuclidean(0.5),
            MetricId::SDivergenceRoot,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if let MetricId::PowerEuclidean(z) = *self {
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::invalid(format!("power-Euclidean zeta must be positive, got {z}")));
            }
        }
        Ok(())
    }

    /// AIRM has no positive definite Gaussian kernel.
    pub fn admits_kernel(&self) -> bool {
        !matches!(self, MetricId::Airm)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::Airm => write!(f, "airm"),
            MetricId::Cholesky => write!(f, "cholesky"),
            MetricId::Euclidean => write!(f, "euclidean"),
            MetricId::LogEuclidean => write!(f, "log-euclidean"),
            MetricId::PowerEuclidean(z) => write!(f, "power-euclidean:{z}"),
            MetricId::SDivergenceRoot => write!(f, "stein"),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let id = match name {
            "airm" => MetricId::Airm,
            "cholesky" | "chk" => MetricId::Cholesky,
            "euclidean" | "euk" => MetricId::Euclidean,
            "log-euclidean" | "logeuclidean" | "lek" => MetricId::LogEuclidean,
            "power-euclidean" | "powereuclidean" | "pek" => {
                let z = match arg {
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad zeta in '{s}'")))?,
                    None => 0.5,
                };
                MetricId::PowerEuclidean(z)
            }
            "stein" | "sk" | "s-divergence" | "sdivergence" => MetricId::SDivergenceRoot,
            _ => return Err(Error::invalid(format!("unknown metric '{s}'"))),
        };
        id.validate()?;
        Ok(id)
    }
}

fn lower_cholesky(m: &SpdMatrix) -> Result<DMatrix<f64>> {
    m.entries()
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: m.eigenvalues()[m.dim() - 1],
        })
}

/// Distance between two SPD matrices under the given metric.
pub fn metric_distance(id: MetricId, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    x.check_dim(y)?;
    id.validate()?;
    let d = match id {
        MetricId::Airm => {
            let w = x.map_spectrum(|l| 1.0 / l.sqrt());
            let inner = &w * y.entries() * &w;
            let inner = (&inner + inner.transpose()) * 0.5;
            inner
                .symmetric_eigenvalues()
                .iter()
                .map(|m| m.ln().powi(2))
                .sum::<f64>()
                .sqrt()
        }
        MetricId::Cholesky => (lower_cholesky(x)? - lower_cholesky(y)?).norm(),
        MetricId::Euclidean => (x.entries() - y.entries()).norm(),
        MetricId::LogEuclidean => (x.log() - y.log()).norm(),
        MetricId::PowerEuclidean(z) => (x.powf(z) - y.powf(z)).norm() / z,
        MetricId::SDivergenceRoot => s_divergence(x, y)?.sqrt(),
    };
    Ok(d)
}

/// Gaussian-type kernel `exp(−θ d²)` built on a metric.
pub fn metric_kernel(id: MetricId, x: &SpdMatrix, y: &SpdMatrix, theta: f64) -> Result<f64> {
    if !id.admits_kernel() {
        return Err(Error::UnsupportedKernel(id.to_string()));
    }
    check_theta(theta)?;
    let d2 = match id {
        MetricId::SDivergenceRoot => s_divergence(x, y)?,
        _ => metric_distance(id, x, y)?.powi(2),
    };
    Ok((-theta * d2).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(v).unwrap()
    }

    #[test]
    fn diagonal_spectrum_is_descending() {
        let m = make_spd(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(m.eigenvalues().as_slice(), &[2.0, 1.0]);
        let u = m.eigenvectors();
        assert_relative_eq!(u[(0, 0)].abs(), 0.0);
        assert_relative_eq!(u[(1, 0)].abs(), 1.0);

        let m = diag(&[2.0, 1.0]);
        assert_eq!(m.eigenvalues().as_slice(), &[2.0, 1.0]);
        assert_relative_eq!(m.eigenvectors().clone(), DMatrix::identity(2, 2));
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let m = make_spd(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(m.eigenvalues().as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let err = make_spd(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap_err();
        match err {
            Error::NotPositiveDefinite { min_eigenvalue } => {
                assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetry_is_rejected_above_tolerance_and_repaired_below() {
        let err = make_spd(DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));

        let m = make_spd(DMatrix::from_row_slice(2, 2, &[2.0, 0.5 + 1e-12, 0.5, 2.0])).unwrap();
        assert_eq!(m.entries()[(0, 1)], m.entries()[(1, 0)]);
    }

    #[test]
    fn near_singular_matrix_hits_positivity_floor() {
        let err = make_spd(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(matches!(
            make_spd(DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn s_divergence_diagonal_values() {
        let x = diag(&[1.0, 1.0]);
        let y = diag(&[4.0, 4.0]);
        // ln det(diag(2.5,2.5)) − ½ ln 16 = ln(6.25/4)
        assert_relative_eq!(s_divergence(&x, &y).unwrap(), (6.25_f64 / 4.0).ln(), epsilon = 1e-14);
        assert_relative_eq!(s_divergence(&x, &y).unwrap(), 0.446_287_102_628_419_5, epsilon = 1e-12);
        assert_eq!(s_divergence(&x, &x).unwrap(), 0.0);
        assert!(matches!(
            s_divergence(&x, &diag(&[1.0, 1.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stein_kernel_values() {
        let x = diag(&[1.0, 1.0]);
        let y = diag(&[4.0, 4.0]);
        assert_relative_eq!(stein_kernel(&x, &y, 1.0).unwrap(), 0.64, epsilon = 1e-14);
        assert_eq!(stein_kernel(&x, &x, 3.5).unwrap(), 1.0);
        let k1 = stein_kernel(&x, &y, 1.0).unwrap();
        let k2 = stein_kernel(&x, &y, 2.0).unwrap();
        assert_relative_eq!(k2, k1 * k1, epsilon = 1e-14);
        assert!(stein_kernel(&x, &y, 0.0).is_err());
    }

    #[test]
    fn metric_distance_commuting_cases() {
        let e2 = 2.0_f64.exp();
        let i = SpdMatrix::identity(2);
        let y = diag(&[e2, e2]);
        let expected = 8.0_f64.sqrt();
        assert_relative_eq!(metric_distance(MetricId::LogEuclidean, &i, &y).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(metric_distance(MetricId::Airm, &i, &y).unwrap(), expected, epsilon = 1e-12);
        let c = diag(&[4.0, 9.0]);
        assert_eq!(metric_distance(MetricId::Cholesky, &c, &c).unwrap(), 0.0);
        // chol(diag(4,9)) = diag(2,3), chol(I) = I
        assert_relative_eq!(
            metric_distance(MetricId::Cholesky, &c, &i).unwrap(),
            5.0_f64.sqrt(),
            epsilon = 1e-12
        );
        // (1/ζ)‖X^ζ − Y^ζ‖ with ζ = 0.5 on diag(4,9) vs I: 2·‖(1,2)‖
        assert_relative_eq!(
            metric_distance(MetricId::PowerEuclidean(0.5), &c, &i).unwrap(),
            2.0 * 5.0_f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn metric_kernel_rules() {
        let x = diag(&[1.0, 1.0]);
        let y = diag(&[4.0, 4.0]);
        assert_eq!(metric_kernel(MetricId::Euclidean, &x, &x, 0.3).unwrap(), 1.0);
        assert_relative_eq!(
            metric_kernel(MetricId::SDivergenceRoot, &x, &y, 1.0).unwrap(),
            0.64,
            epsilon = 1e-14
        );
        assert!(matches!(
            metric_kernel(MetricId::Airm, &x, &y, 1.0),
            Err(Error::UnsupportedKernel(_))
        ));
    }

    #[test]
    fn metric_names_round_trip() {
        for id in MetricId::all() {
            assert_eq!(id.to_string().parse::<MetricId>().unwrap(), id);
        }
        assert!("power-euclidean:-1".parse::<MetricId>().is_err());
        assert!("nope".parse::<MetricId>().is_err());
    }
}
