//! Sample-eigenvalue bias of covariance estimates.
//!
//! Draws `n` vectors from `N(0, diag(1, …, d))`, forms the unbiased sample
//! covariance, and records its extreme eigenvalues. The largest is biased up
//! and the smallest down, more so when `n` is close to `d`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::rng::{stream_rng, NormalSampler};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSummary {
    pub dim: usize,
    pub samples: usize,
    pub trials: usize,
    pub mean_largest: f64,
    pub mean_smallest: f64,
    pub std_largest: f64,
    pub std_smallest: f64,
}

fn trial(d: usize, n: usize, seed: u64, index: u64) -> (f64, f64) {
    let mut normal = NormalSampler::new(stream_rng(seed, index));
    let scale: Vec<f64> = (1..=d).map(|i| (i as f64).sqrt()).collect();
    let mut data = DMatrix::zeros(d, n);
    for k in 0..n {
        for i in 0..d {
            data[(i, k)] = scale[i] * normal.sample();
        }
    }
    let mean: DVector<f64> = data.column_mean();
    for mut col in data.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&data * data.transpose()) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    (eig.max(), eig.min())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

/// Mean extreme eigenvalues over `trials` independent draws; trial `t` uses stream `t`.
pub fn eigenvalue_bias_experiment(dim: usize, samples: usize, trials: usize, seed: u64) -> Result<BiasSummary> {
    if samples <= dim {
        return Err(Error::invalid(format!("need more samples ({samples}) than dimensions ({dim})")));
    }
    if dim == 0 || trials == 0 {
        return Err(Error::invalid("dimension and trial count must be positive"));
    }
    let extremes: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| trial(dim, samples, seed, t))
        .collect();
    let largest: Vec<f64> = extremes.iter().map(|e| e.0).collect();
    let smallest: Vec<f64> = extremes.iter().map(|e| e.1).collect();
    let (mean_largest, std_largest) = mean_std(&largest);
    let (mean_smallest, std_smallest) = mean_std(&smallest);
    Ok(BiasSummary {
        dim,
        samples,
        trials,
        mean_largest,
        mean_smallest,
        std_largest,
        std_smallest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_few_samples() {
        assert!(eigenvalue_bias_experiment(40, 40, 1, 0).is_err());
    }

    #[test]
    fn large_samples_are_consistent() {
        let s = eigenvalue_bias_experiment(40, 100_000, 2, 7).unwrap();
        assert!((s.mean_largest - 40.0).abs() < 2.0, "{s:?}");
        assert!((s.mean_smallest - 1.0).abs() < 0.1, "{s:?}");
    }

    #[test]
    fn small_samples_spread_the_spectrum() {
        let s = eigenvalue_bias_experiment(40, 100, 20, 1).unwrap();
        assert!(s.mean_largest > 50.0, "{s:?}");
        assert!(s.mean_smallest < 1.0, "{s:?}");
    }
}
