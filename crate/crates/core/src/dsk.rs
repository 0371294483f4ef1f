//! Eigenvalue adjustment and the discriminative Stein kernel.
//!
//! An adjustment vector `α` rescales the sorted spectrum of each matrix,
//! either as powers (`λᵢ^αᵢ`) or as coefficients (`αᵢ λᵢ`), leaving the
//! eigenvectors untouched. The kernel is the Stein kernel evaluated on the
//! adjusted pair, so it stays positive definite wherever the Stein kernel is.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{check_theta, reconstruct, SpdMatrix};

/// How `α` acts on the eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdjustmentMode {
    Power,
    Coefficient,
}

impl fmt::Display for AdjustmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjustmentMode::Power => "power",
            AdjustmentMode::Coefficient => "coef",
        })
    }
}

impl FromStr for AdjustmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "power" | "p" => Ok(AdjustmentMode::Power),
            "coef" | "coefficient" | "c" => Ok(AdjustmentMode::Coefficient),
            other => Err(Error::invalid(format!("unknown adjustment mode '{other}'"))),
        }
    }
}

/// Adjustment vector `α` with its prior `α₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentParams {
    mode: AdjustmentMode,
    alpha: DVector<f64>,
    alpha0: DVector<f64>,
}

impl AdjustmentParams {
    /// `α = α₀ = 1`, which reproduces the plain Stein kernel.
    pub fn identity(dim: usize, mode: AdjustmentMode) -> Self {
        Self {
            mode,
            alpha: DVector::from_element(dim, 1.0),
            alpha0: DVector::from_element(dim, 1.0),
        }
    }

    /// `alpha` with the default all-ones prior.
    pub fn new(mode: AdjustmentMode, alpha: DVector<f64>) -> Result<Self> {
        let alpha0 = DVector::from_element(alpha.len(), 1.0);
        Self::with_prior(mode, alpha, alpha0)
    }

    pub fn with_prior(mode: AdjustmentMode, alpha: DVector<f64>, alpha0: DVector<f64>) -> Result<Self> {
        if alpha.len() != alpha0.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len(),
                found: alpha0.len(),
            });
        }
        let params = Self { mode, alpha, alpha0 };
        params.validate()?;
        Ok(params)
    }

    pub fn mode(&self) -> AdjustmentMode {
        self.mode
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn alpha0(&self) -> &DVector<f64> {
        &self.alpha0
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Returns a copy with a new `α` and the same prior.
    pub fn with_alpha(&self, alpha: DVector<f64>) -> Result<Self> {
        Self::with_prior(self.mode, alpha, self.alpha0.clone())
    }

    pub fn is_identity(&self) -> bool {
        self.alpha.iter().all(|&a| a == 1.0)
    }

    fn validate(&self) -> Result<()> {
        for (index, &value) in self.alpha.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::invalid(format!("alpha[{index}] is not finite")));
            }
            if self.mode == AdjustmentMode::Coefficient && value <= 0.0 {
                return Err(Error::NonPositiveCoefficient { index, value });
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &SpdMatrix) -> Result<()> {
        self.check_dimension(x.dim())
    }

    /// Fails unless the parameters act on `dim×dim` matrices.
    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// Adjusted eigenvalue and its derivative with respect to `αᵢ`.
    #[inline]
    fn adjust_value(&self, i: usize, lambda: f64) -> (f64, f64) {
        let a = self.alpha[i];
        match self.mode {
            AdjustmentMode::Power => {
                let v = lambda.powf(a);
                (v, lambda.ln() * v)
            }
            AdjustmentMode::Coefficient => (a * lambda, lambda),
        }
    }
}

/// A sample with its adjusted spectrum, kept in the original (descending)
/// eigenvalue order so index `z` always refers to the `z`-th largest
/// eigenvalue of the unadjusted matrix.
#[derive(Debug, Clone)]
pub(crate) struct AdjustedSample {
    eigenvectors: DMatrix<f64>,
    adjusted: DVector<f64>,
    /// `∂λ̃_z / ∂α_z`.
    derivative: DVector<f64>,
    matrix: DMatrix<f64>,
    log_det: f64,
}

impl AdjustedSample {
    pub(crate) fn new(x: &SpdMatrix, params: &AdjustmentParams) -> Result<Self> {
        params.check_dim(x)?;
        let d = x.dim();
        let mut adjusted = DVector::zeros(d);
        let mut derivative = DVector::zeros(d);
        for (i, &l) in x.eigenvalues().iter().enumerate() {
            let (v, dv) = params.adjust_value(i, l);
            adjusted[i] = v;
            derivative[i] = dv;
        }
        let max = adjusted.max().max(1.0);
        let min = adjusted.min();
        if !(min.is_finite() && min > crate::spd::POSITIVITY_FLOOR * max) || !max.is_finite() {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let matrix = reconstruct(x.eigenvectors(), adjusted.as_slice(), |l| l);
        let log_det = adjusted.iter().map(|l| l.ln()).sum();
        Ok(Self {
            eigenvectors: x.eigenvectors().clone(),
            adjusted,
            derivative,
            matrix,
            log_det,
        })
    }

    fn into_spd(self) -> Result<SpdMatrix> {
        SpdMatrix::from_eigen(self.eigenvectors, self.adjusted)
    }
}

/// Adjusted S-divergence of a pre-adjusted pair.
pub(crate) fn pair_divergence(x: &AdjustedSample, y: &AdjustedSample) -> f64 {
    let mean = (&x.matrix + &y.matrix) * 0.5;
    let value = crate::spd::log_det_symmetric(&mean) - 0.5 * (x.log_det + y.log_det);
    value.max(0.0)
}

/// Kernel value and `∂k/∂α` for a pre-adjusted pair, written into `grad`.
///
/// With `M = (X̃+Ỹ)/2 = V diag(μ) Vᵀ` and `∂X̃/∂α_z = c_z u_z u_zᵀ`, each trace
/// term collapses to a scalar: `tr(X̃⁻¹ ∂X̃/∂α_z) = c_z / λ̃_z` and
/// `tr(M⁻¹ ∂X̃/∂α_z) = c_z Σ_k (v_k·u_z)² / μ_k`.
pub(crate) fn pair_kernel_and_gradient(
    x: &AdjustedSample,
    y: &AdjustedSample,
    theta: f64,
    grad: &mut [f64],
) -> f64 {
    let d = x.adjusted.len();
    let mean = (&x.matrix + &y.matrix) * 0.5;
    let eig = mean.symmetric_eigen();
    let log_det_mean: f64 = eig.eigenvalues.iter().map(|m| m.ln()).sum();
    let divergence = (log_det_mean - 0.5 * (x.log_det + y.log_det)).max(0.0);
    let k = (-theta * divergence).exp();

    let vt = eig.eigenvectors.transpose();
    let px = &vt * &x.eigenvectors;
    let py = &vt * &y.eigenvectors;
    let inv_mu: Vec<f64> = eig.eigenvalues.iter().map(|m| 1.0 / m).collect();
    for z in 0..d {
        let mut qx = 0.0;
        let mut qy = 0.0;
        for (kk, w) in inv_mu.iter().enumerate() {
            qx += px[(kk, z)] * px[(kk, z)] * w;
            qy += py[(kk, z)] * py[(kk, z)] * w;
        }
        let cx = x.derivative[z];
        let cy = y.derivative[z];
        let bracket = cx / x.adjusted[z] + cy / y.adjusted[z] - (cx * qx + cy * qy);
        grad[z] = 0.5 * theta * k * bracket;
    }
    k
}

/// Adjusts the eigenvalues of `x`: `U diag(λᵢ^αᵢ) Uᵀ` or `U diag(αᵢ λᵢ) Uᵀ`.
pub fn adjust(x: &SpdMatrix, params: &AdjustmentParams) -> Result<SpdMatrix> {
    AdjustedSample::new(x, params)?.into_spd()
}

/// `S(X̃, Ỹ)`.
pub fn adjusted_s_divergence(x: &SpdMatrix, y: &SpdMatrix, params: &AdjustmentParams) -> Result<f64> {
    params.check_dim(y)?;
    let ax = AdjustedSample::new(x, params)?;
    let ay = AdjustedSample::new(y, params)?;
    Ok(pair_divergence(&ax, &ay))
}

/// Discriminative Stein kernel `exp(−θ S(X̃, Ỹ))`.
///
/// Any `θ > 0` is accepted; positive definiteness of the resulting Gram
/// matrices is only guaranteed for `θ` in the Mercer set (see
/// [`crate::learn::ThetaGrid`]).
pub fn dsk_kernel(x: &SpdMatrix, y: &SpdMatrix, theta: f64, params: &AdjustmentParams) -> Result<f64> {
    check_theta(theta)?;
    Ok((-theta * adjusted_s_divergence(x, y, params)?).exp())
}

/// Analytic gradient `∂k_α(X, Y) / ∂α`.
pub fn dsk_gradient(
    x: &SpdMatrix,
    y: &SpdMatrix,
    theta: f64,
    params: &AdjustmentParams,
) -> Result<DVector<f64>> {
    check_theta(theta)?;
    params.check_dim(y)?;
    let ax = AdjustedSample::new(x, params)?;
    let ay = AdjustedSample::new(y, params)?;
    let mut grad = vec![0.0; params.dim()];
    pair_kernel_and_gradient(&ax, &ay, theta, &mut grad);
    Ok(DVector::from_vec(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::{s_divergence, stein_kernel};
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> SpdMatrix {
        SpdMatrix::from_diagonal(v).unwrap()
    }

    fn dense() -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0],
        ))
        .unwrap()
    }

    #[test]
    fn identity_adjustment_is_a_no_op() {
        let x = dense();
        for mode in [AdjustmentMode::Power, AdjustmentMode::Coefficient] {
            let p = AdjustmentParams::identity(3, mode);
            let adjusted = adjust(&x, &p).unwrap();
            assert_relative_eq!(adjusted.entries().clone(), x.entries().clone(), epsilon = 1e-10);
        }
    }

    #[test]
    fn power_half_on_diagonal() {
        let p = AdjustmentParams::new(AdjustmentMode::Power, DVector::from_vec(vec![0.5, 0.5])).unwrap();
        let a = adjust(&diag(&[4.0, 9.0]), &p).unwrap();
        assert_relative_eq!(a.entries().clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), epsilon = 1e-12);
    }

    #[test]
    fn zero_power_gives_identity() {
        let p = AdjustmentParams::new(AdjustmentMode::Power, DVector::zeros(3)).unwrap();
        let a = adjust(&dense(), &p).unwrap();
        assert_relative_eq!(a.entries().clone(), DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn coefficient_mode_requires_positive_alpha() {
        let err = AdjustmentParams::new(AdjustmentMode::Coefficient, DVector::from_vec(vec![1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::NonPositiveCoefficient { index: 1, .. }));
        assert!(AdjustmentParams::new(AdjustmentMode::Power, DVector::from_vec(vec![1.0, -2.0])).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = AdjustmentParams::identity(2, AdjustmentMode::Power);
        assert!(matches!(adjust(&dense(), &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn adjusted_divergence_values() {
        let x = diag(&[1.0, 1.0]);
        let y = diag(&[4.0, 4.0]);
        let half = AdjustmentParams::new(AdjustmentMode::Power, DVector::from_vec(vec![0.5, 0.5])).unwrap();
        // S(I, 2I) = 2 ln 1.5 − ½ ln 4 = ln(2.25/2)
        assert_relative_eq!(adjusted_s_divergence(&x, &y, &half).unwrap(), (2.25_f64 / 2.0).ln(), epsilon = 1e-14);
        assert_relative_eq!(dsk_kernel(&x, &y, 1.0, &half).unwrap(), 8.0 / 9.0, epsilon = 1e-14);
        assert_eq!(adjusted_s_divergence(&x, &x, &half).unwrap(), 0.0);

        let one = AdjustmentParams::identity(2, AdjustmentMode::Power);
        assert_eq!(adjusted_s_divergence(&x, &y, &one).unwrap(), s_divergence(&x, &y).unwrap());
        assert_eq!(dsk_kernel(&x, &y, 1.5, &one).unwrap(), stein_kernel(&x, &y, 1.5).unwrap());
    }

    #[test]
    fn gradient_vanishes_on_identical_arguments() {
        let x = dense();
        let p = AdjustmentParams::identity(3, AdjustmentMode::Power);
        let g = dsk_gradient(&x, &x, 1.0, &p).unwrap();
        assert!(g.amax() < 1e-14, "{g}");
    }

    #[test]
    fn coefficient_gradient_matches_diagonal_closed_form() {
        // X = diag(a), Y = diag(b), coefficient mode:
        // S(α) = Σ_i ln(α_i (a_i+b_i)/2) − ½ Σ_i (2 ln α_i + ln a_i + ln b_i),
        // so ∂S/∂α_i = 1/α_i − 1/α_i = 0 and the gradient vanishes.
        let x = diag(&[3.0, 2.0]);
        let y = diag(&[5.0, 1.0]);
        let p = AdjustmentParams::identity(2, AdjustmentMode::Coefficient);
        let g = dsk_gradient(&x, &y, 1.0, &p).unwrap();
        assert!(g.amax() < 1e-14, "{g}");

        // Power mode on the same pair: S(α) = Σ ln((a^α + b^α)/2) − ½ α (ln a + ln b),
        // ∂S/∂α_z = (a ln a + b ln b)/(a + b) − ½ (ln a + ln b) at α = 1.
        // Descending spectra pair up as (3, 5) and (2, 1).
        let p = AdjustmentParams::identity(2, AdjustmentMode::Power);
        let g = dsk_gradient(&x, &y, 0.5, &p).unwrap();
        let k = dsk_kernel(&x, &y, 0.5, &p).unwrap();
        for (z, (a, b)) in [(3.0_f64, 5.0_f64), (2.0, 1.0)].into_iter().enumerate() {
            let ds = (a * a.ln() + b * b.ln()) / (a + b) - 0.5 * (a.ln() + b.ln());
            assert_relative_eq!(g[z], -0.5 * k * ds, epsilon = 1e-13);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = dense();
        let y = SpdMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, -0.3, 0.1, -0.3, 1.5, 0.4, 0.1, 0.4, 5.0],
        ))
        .unwrap();
        for mode in [AdjustmentMode::Power, AdjustmentMode::Coefficient] {
            let alpha = DVector::from_vec(vec![1.3, 0.7, 0.9]);
            let p = AdjustmentParams::new(mode, alpha.clone()).unwrap();
            let g = dsk_gradient(&x, &y, 1.5, &p).unwrap();
            let h = 1e-5;
            for z in 0..3 {
                let mut up = alpha.clone();
                up[z] += h;
                let mut down = alpha.clone();
                down[z] -= h;
                let fu = dsk_kernel(&x, &y, 1.5, &p.with_alpha(up).unwrap()).unwrap();
                let fd = dsk_kernel(&x, &y, 1.5, &p.with_alpha(down).unwrap()).unwrap();
                let fdiff = (fu - fd) / (2.0 * h);
                assert_relative_eq!(g[z], fdiff, max_relative = 1e-6, epsilon = 1e-10);
            }
        }
    }
}
