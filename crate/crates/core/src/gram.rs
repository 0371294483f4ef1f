//! Kernel evaluators and Gram matrix assembly.
//!
//! Pairwise entries are independent, so assembly runs in parallel over rows;
//! each entry is computed by the same code path regardless of scheduling, so
//! results are bit-identical across thread counts.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dsk::{pair_divergence, pair_kernel_and_gradient, AdjustedSample, AdjustmentParams};
use crate::error::{Error, Result};
use crate::spd::{check_theta, metric_kernel, stein_kernel, MetricId, SpdMatrix};

/// Which kernel produced a Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelId {
    Stein,
    Dsk(AdjustmentParams),
    Metric(MetricId),
}

/// An `n×n` kernel matrix with the kernel and `θ` it was computed with.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    kernel: KernelId,
    theta: f64,
}

impl GramMatrix {
    pub fn new(values: DMatrix<f64>, kernel: KernelId, theta: f64) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::NotSquare {
                rows: values.nrows(),
                cols: values.ncols(),
            });
        }
        Ok(Self { values, kernel, theta })
    }

    /// Wraps a raw matrix with no kernel provenance (tests, externally built Grams).
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, KernelId::Stein, f64::NAN)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn kernel(&self) -> &KernelId {
        &self.kernel
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// A kernel on SPD matrices.
pub trait Kernel: Sync {
    fn eval(&self, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64>;

    fn id(&self) -> KernelId;

    fn theta(&self) -> f64;

    /// Symmetric Gram matrix over `samples`.
    fn gram(&self, samples: &[SpdMatrix]) -> Result<GramMatrix> {
        let values = symmetric_fill(samples.len(), |i, j| self.eval(&samples[i], &samples[j]))?;
        GramMatrix::new(values, self.id(), self.theta())
    }

    /// `rows.len() × cols.len()` matrix of kernel values.
    fn cross(&self, rows: &[SpdMatrix], cols: &[SpdMatrix]) -> Result<DMatrix<f64>> {
        rect_fill(rows.len(), cols.len(), |i, j| self.eval(&rows[i], &cols[j]))
    }
}

fn symmetric_fill(n: usize, f: impl Fn(usize, usize) -> Result<f64> + Sync) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| f(i, j)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn rect_fill(
    nrows: usize,
    ncols: usize,
    f: impl Fn(usize, usize) -> Result<f64> + Sync,
) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = (0..nrows)
        .into_par_iter()
        .map(|i| (0..ncols).map(|j| f(i, j)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Plain Stein kernel.
#[derive(Debug, Clone, Copy)]
pub struct SteinKernel {
    pub theta: f64,
}

impl Kernel for SteinKernel {
    fn eval(&self, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
        stein_kernel(x, y, self.theta)
    }

    fn id(&self) -> KernelId {
        KernelId::Stein
    }

    fn theta(&self) -> f64 {
        self.theta
    }
}

/// Discriminative Stein kernel; Gram assembly adjusts each sample once.
#[derive(Debug, Clone)]
pub struct DskKernel {
    pub theta: f64,
    pub params: AdjustmentParams,
}

impl DskKernel {
    pub fn new(theta: f64, params: AdjustmentParams) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta, params })
    }

    fn prepare(&self, samples: &[SpdMatrix]) -> Result<Vec<AdjustedSample>> {
        samples
            .par_iter()
            .map(|s| AdjustedSample::new(s, &self.params))
            .collect()
    }
}

impl Kernel for DskKernel {
    fn eval(&self, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
        crate::dsk::dsk_kernel(x, y, self.theta, &self.params)
    }

    fn id(&self) -> KernelId {
        KernelId::Dsk(self.params.clone())
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn gram(&self, samples: &[SpdMatrix]) -> Result<GramMatrix> {
        check_theta(self.theta)?;
        let adjusted = self.prepare(samples)?;
        let theta = self.theta;
        let values = symmetric_fill(samples.len(), |i, j| {
            Ok((-theta * pair_divergence(&adjusted[i], &adjusted[j])).exp())
        })?;
        GramMatrix::new(values, self.id(), self.theta)
    }

    fn cross(&self, rows: &[SpdMatrix], cols: &[SpdMatrix]) -> Result<DMatrix<f64>> {
        check_theta(self.theta)?;
        let ar = self.prepare(rows)?;
        let ac = self.prepare(cols)?;
        let theta = self.theta;
        rect_fill(rows.len(), cols.len(), |i, j| {
            Ok((-theta * pair_divergence(&ar[i], &ac[j])).exp())
        })
    }
}

/// `exp(−θ d²)` for a baseline metric.
#[derive(Debug, Clone, Copy)]
pub struct MetricKernel {
    pub metric: MetricId,
    pub theta: f64,
}

impl Kernel for MetricKernel {
    fn eval(&self, x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
        metric_kernel(self.metric, x, y, self.theta)
    }

    fn id(&self) -> KernelId {
        KernelId::Metric(self.metric)
    }

    fn theta(&self) -> f64 {
        self.theta
    }
}

/// DSK Gram matrix together with `∂K/∂α_z` for every `z`.
pub fn dsk_gram_with_gradient(
    samples: &[SpdMatrix],
    theta: f64,
    params: &AdjustmentParams,
) -> Result<(GramMatrix, Vec<DMatrix<f64>>)> {
    check_theta(theta)?;
    let d = params.dim();
    let n = samples.len();
    let adjusted: Vec<AdjustedSample> = samples
        .par_iter()
        .map(|s| AdjustedSample::new(s, params))
        .collect::<Result<_>>()?;

    // Per row i: (k_ij, ∂k_ij/∂α) for j > i. The diagonal is 1 with zero gradient.
    let rows: Vec<Vec<(f64, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let mut g = vec![0.0; d];
                    let k = pair_kernel_and_gradient(&adjusted[i], &adjusted[j], theta, &mut g);
                    (k, g)
                })
                .collect()
        })
        .collect();

    let mut values = DMatrix::identity(n, n);
    let mut grads = vec![DMatrix::zeros(n, n); d];
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, (k, g)) in row.into_iter().enumerate() {
            let j = i + 1 + offset;
            values[(i, j)] = k;
            values[(j, i)] = k;
            for (z, gz) in g.into_iter().enumerate() {
                grads[z][(i, j)] = gz;
                grads[z][(j, i)] = gz;
            }
        }
    }
    let gram = GramMatrix::new(values, KernelId::Dsk(params.clone()), theta)?;
    Ok((gram, grads))
}

/// Symmetric matrix of S-divergences; `exp(−θ S)` is the Stein Gram for any `θ`.
pub fn s_divergence_matrix(samples: &[SpdMatrix]) -> Result<DMatrix<f64>> {
    symmetric_fill(samples.len(), |i, j| {
        if i == j {
            Ok(0.0)
        } else {
            crate::spd::s_divergence(&samples[i], &samples[j])
        }
    })
}

/// Symmetric distance matrix over one sample set, each pair computed once.
pub fn pairwise_distances(metric: MetricId, samples: &[SpdMatrix]) -> Result<DMatrix<f64>> {
    symmetric_fill(samples.len(), |i, j| {
        if i == j {
            Ok(0.0)
        } else {
            crate::spd::metric_distance(metric, &samples[i], &samples[j])
        }
    })
}

/// Pairwise distance matrix for a metric (used where no kernel exists, e.g. AIRM).
pub fn distance_matrix(metric: MetricId, rows: &[SpdMatrix], cols: &[SpdMatrix]) -> Result<DMatrix<f64>> {
    rect_fill(rows.len(), cols.len(), |i, j| {
        crate::spd::metric_distance(metric, &rows[i], &cols[j])
    })
}
