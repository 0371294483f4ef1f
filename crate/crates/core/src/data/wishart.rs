//! Wishart sampling by the Bartlett decomposition.
//!
//! For `Σ = LLᵀ`, a draw is `S = L A Aᵀ Lᵀ` where `A` is lower triangular with
//! `A_ii = √c_i`, `c_i ~ χ²(n − i)` (0-based `i`) and `A_ij ~ N(0, 1)` below
//! the diagonal. Chi-square variates are sums of squared Box–Muller normals,
//! so the degrees of freedom are integers. Draw `i` uses RNG stream `i`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::dataset::LabeledDataset;
use super::rng::{stream_rng, NormalSampler};
use crate::error::{Error, Result};
use crate::spd::{make_spd, SpdMatrix};

#[derive(Debug, Clone)]
pub struct WishartSpec {
    pub dim: usize,
    pub dof: usize,
    pub scale: SpdMatrix,
}

impl WishartSpec {
    pub fn new(dof: usize, scale: SpdMatrix) -> Result<Self> {
        let dim = scale.dim();
        if dof < dim {
            return Err(Error::invalid(format!(
                "Wishart degrees of freedom ({dof}) must be at least the dimension ({dim})"
            )));
        }
        Ok(Self { dim, dof, scale })
    }

    /// `W_d(c·I, n)`.
    pub fn isotropic(dim: usize, dof: usize, scale: f64) -> Result<Self> {
        Self::new(dof, SpdMatrix::from_diagonal(&vec![scale; dim])?)
    }
}

fn bartlett_draw(spec: &WishartSpec, chol: &DMatrix<f64>, seed: u64, stream: u64) -> Result<SpdMatrix> {
    let d = spec.dim;
    let mut normal = NormalSampler::new(stream_rng(seed, stream));
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let df = spec.dof - i;
        let chi2: f64 = (0..df).map(|_| normal.sample().powi(2)).sum();
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = normal.sample();
        }
    }
    let la = chol * a;
    make_spd(&la * la.transpose())
}

/// `count` independent draws from `W_d(Σ, n)`, reproducible from `seed`.
pub fn sample_wishart(spec: &WishartSpec, count: usize, seed: u64) -> Result<Vec<SpdMatrix>> {
    sample_streams(spec, seed, 0, count)
}

fn sample_streams(spec: &WishartSpec, seed: u64, first_stream: u64, count: usize) -> Result<Vec<SpdMatrix>> {
    let chol = spec
        .scale
        .entries()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: spec.scale.eigenvalues()[spec.dim - 1],
        })?
        .l();
    (0..count as u64)
        .into_par_iter()
        .map(|i| bartlett_draw(spec, &chol, seed, first_stream + i))
        .collect()
}

/// Two-class task: class 1 from `W_d(I, n)`, class 2 from `W_d((1+τ)I, n)`.
///
/// Class 1 uses streams `0..per_class`, class 2 streams `2³²..2³²+per_class`.
pub fn make_wishart_task(dim: usize, dof: usize, tau: f64, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if per_class == 0 {
        return Err(Error::invalid("per_class must be positive"));
    }
    let first = WishartSpec::isotropic(dim, dof, 1.0)?;
    let second = WishartSpec::isotropic(dim, dof, 1.0 + tau)?;
    let mut samples = sample_streams(&first, seed, 0, per_class)?;
    samples.extend(sample_streams(&second, seed, 1 << 32, per_class)?);
    let labels = (0..2 * per_class).map(|i| if i < per_class { 1 } else { 2 }).collect();
    LabeledDataset::new(samples, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(WishartSpec::isotropic(5, 4, 1.0).is_err());
        assert!(make_wishart_task(2, 5, 0.0, 3, 1).is_err());
        assert!(make_wishart_task(2, 5, -1.0, 3, 1).is_err());
    }

    #[test]
    fn draws_are_bit_reproducible() {
        let spec = WishartSpec::isotropic(2, 2, 1.0).unwrap();
        let a = sample_wishart(&spec, 4, 99).unwrap();
        let b = sample_wishart(&spec, 4, 99).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let bits_x: Vec<u64> = x.entries().iter().map(|v| v.to_bits()).collect();
            let bits_y: Vec<u64> = y.entries().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_x, bits_y);
        }
        let c = sample_wishart(&spec, 4, 100).unwrap();
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn mean_and_marginal_moments() {
        // E[S] = nΣ; S₁₁/Σ₁₁ ~ χ²_n with mean n and variance 2n.
        let (d, n, count) = (3usize, 7usize, 2000usize);
        let sigma = SpdMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5],
        ))
        .unwrap();
        let spec = WishartSpec::new(n, sigma.clone()).unwrap();
        let draws = sample_wishart(&spec, count, 5).unwrap();
        let mut mean = DMatrix::zeros(d, d);
        for s in &draws {
            mean += s.entries();
        }
        mean /= count as f64;
        // Var(S_ij) = n(Σ_ij² + Σ_ii Σ_jj)
        for i in 0..d {
            for j in 0..d {
                let s = sigma.entries();
                let var = n as f64 * (s[(i, j)].powi(2) + s[(i, i)] * s[(j, j)]);
                let se = (var / count as f64).sqrt();
                let expected = n as f64 * s[(i, j)];
                assert!((mean[(i, j)] - expected).abs() < 5.0 * se, "({i},{j}) {} vs {}", mean[(i, j)], expected);
            }
        }
        let ratios: Vec<f64> = draws.iter().map(|s| s.entries()[(0, 0)] / 2.0).collect();
        let m = ratios.iter().sum::<f64>() / count as f64;
        let v = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (count - 1) as f64;
        let nf = n as f64;
        assert!((m - nf).abs() < 5.0 * (2.0 * nf / count as f64).sqrt(), "mean {m}");
        // Var of the sample variance for χ²_n: (μ₄ − σ⁴)/N + ... ≈ (48n + 12n² − 4n²)/N
        let var_se = ((12.0 * nf * nf + 48.0 * nf - 4.0 * nf * nf) / count as f64).sqrt();
        assert!((v - 2.0 * nf).abs() < 5.0 * var_se, "var {v}");
    }

    #[test]
    fn task_layout() {
        let ds = make_wishart_task(3, 10, 0.5, 4, 1).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.labels(), &[1, 1, 1, 1, 2, 2, 2, 2]);
        assert_eq!(ds.dim(), 3);
    }
}
