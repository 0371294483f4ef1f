//! Precomputed-kernel classifiers and evaluation.
//!
//! k-NN ranks training samples by the kernel-induced squared distance
//! `k(x,x) + k(y,y) − 2k(x,y)`; one-vs-one SVMs are trained on `k̃ = k + δ/C`
//! and vote by max-wins. The SVM decision score uses `k` itself, since a
//! test sample never coincides with a training index. The bias of each
//! binary SVM is recovered from the KKT conditions of its support vectors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::criteria::{class_pairs, pair_members, ridged, solve_svm_dual};
use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::gram::Kernel;
use crate::qp::QpOptions;
use crate::spd::SpdMatrix;

/// Default odd neighbourhood sizes searched by cross-validation.
pub const DEFAULT_K_GRID: [usize; 6] = [1, 3, 5, 7, 9, 11];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    k: usize,
}

impl KnnConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::invalid(format!("k must be a positive odd integer, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 1 }
    }
}

/// Majority label among the `k` smallest squared distances.
///
/// Distance ties keep training order; vote ties go to the smallest label.
pub fn knn_vote(sq_distances: &[f64], labels: &[Label], cfg: KnnConfig) -> Result<Label> {
    if labels.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if sq_distances.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: sq_distances.len(),
            right: labels.len(),
        });
    }
    if cfg.k > labels.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds the {} training samples",
            cfg.k,
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| sq_distances[a].total_cmp(&sq_distances[b]).then(a.cmp(&b)));
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut votes = vec![0usize; max_label + 1];
    for &i in &order[..cfg.k] {
        votes[labels[i]] += 1;
    }
    let mut best = 0;
    for label in 0..votes.len() {
        if votes[label] > votes[best] {
            best = label;
        }
    }
    Ok(best)
}

/// k-NN from a `tests × train` kernel block and both self-similarity vectors.
pub fn knn_from_kernel(
    cross: &DMatrix<f64>,
    train_self: &[f64],
    test_self: &[f64],
    labels: &[Label],
    cfg: KnnConfig,
) -> Result<Vec<Label>> {
    if cross.ncols() != train_self.len() || cross.nrows() != test_self.len() {
        return Err(Error::SizeMismatch(format!(
            "cross kernel is {}x{} for {} tests and {} training samples",
            cross.nrows(),
            cross.ncols(),
            test_self.len(),
            train_self.len()
        )));
    }
    (0..cross.nrows())
        .into_par_iter()
        .map(|r| {
            let d2: Vec<f64> = (0..cross.ncols())
                .map(|c| test_self[r] + train_self[c] - 2.0 * cross[(r, c)])
                .collect();
            knn_vote(&d2, labels, cfg)
        })
        .collect()
}

/// k-NN from a `tests × train` matrix of (unsquared) distances.
pub fn knn_from_distances(distances: &DMatrix<f64>, labels: &[Label], cfg: KnnConfig) -> Result<Vec<Label>> {
    (0..distances.nrows())
        .into_par_iter()
        .map(|r| {
            let d2: Vec<f64> = distances.row(r).iter().map(|d| d * d).collect();
            knn_vote(&d2, labels, cfg)
        })
        .collect()
}

fn self_similarities(kernel: &dyn Kernel, xs: &[SpdMatrix]) -> Result<Vec<f64>> {
    xs.iter().map(|x| kernel.eval(x, x)).collect()
}

pub fn knn_predict_batch(
    train: &LabeledDataset,
    kernel: &dyn Kernel,
    tests: &[SpdMatrix],
    cfg: KnnConfig,
) -> Result<Vec<Label>> {
    let cross = kernel.cross(tests, train.samples())?;
    let train_self = self_similarities(kernel, train.samples())?;
    let test_self = self_similarities(kernel, tests)?;
    knn_from_kernel(&cross, &train_self, &test_self, train.labels(), cfg)
}

pub fn knn_predict(train: &LabeledDataset, kernel: &dyn Kernel, test: &SpdMatrix, cfg: KnnConfig) -> Result<Label> {
    Ok(knn_predict_batch(train, kernel, std::slice::from_ref(test), cfg)?[0])
}

/// Binary SVM between classes `a` (`t = +1`) and `b` (`t = −1`).
#[derive(Debug, Clone, PartialEq)]
pub struct PairSvm {
    pub classes: (Label, Label),
    /// Training-set indices of the pair's samples.
    pub indices: Vec<usize>,
    pub targets: Vec<f64>,
    pub eta: DVector<f64>,
    pub bias: f64,
    pub objective: f64,
}

impl PairSvm {
    /// `s = Σ η_z t_z k(X, X_z) + b` from one row of kernel values against the training set.
    pub fn score(&self, kernel_row: &[f64]) -> f64 {
        let mut s = self.bias;
        for (z, &i) in self.indices.iter().enumerate() {
            if self.eta[z] != 0.0 {
                s += self.eta[z] * self.targets[z] * kernel_row[i];
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvoSvmModel {
    pub c: f64,
    pub num_classes: usize,
    pub pairs: Vec<PairSvm>,
}

/// One binary SVM per class pair, from the training Gram matrix.
pub fn ovo_train_from_gram(gram: &DMatrix<f64>, labels: &[Label], num_classes: usize, c: f64) -> Result<OvoSvmModel> {
    crate::criteria::check_c(c)?;
    if num_classes < 2 {
        return Err(Error::invalid("one-vs-one needs at least two classes"));
    }
    let opts = QpOptions::default();
    let pairs = class_pairs(num_classes)
        .into_par_iter()
        .map(|(a, b)| {
            let (indices, targets) = pair_members(labels, a, b);
            let sub = DMatrix::from_fn(indices.len(), indices.len(), |i, j| gram[(indices[i], indices[j])]);
            let dual = solve_svm_dual(&ridged(&sub, c), &targets, &opts)
                .map_err(|e| Error::PairFailed(a, b, Box::new(e)))?;
            Ok(PairSvm {
                classes: (a, b),
                indices,
                targets,
                eta: dual.eta,
                bias: dual.bias,
                objective: dual.objective,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvoSvmModel { c, num_classes, pairs })
}

pub fn ovo_train(train: &LabeledDataset, kernel: &dyn Kernel, c: f64) -> Result<OvoSvmModel> {
    let gram = kernel.gram(train.samples())?;
    ovo_train_from_gram(gram.values(), train.labels(), train.num_classes(), c)
}

/// Max-wins label from a row of kernel values against the training set.
pub fn ovo_vote(model: &OvoSvmModel, kernel_row: &[f64]) -> Label {
    let mut wins = vec![0i64; model.num_classes + 1];
    for pair in &model.pairs {
        let s = pair.score(kernel_row);
        let (a, b) = pair.classes;
        if s > 0.0 {
            wins[a] += 1;
            wins[b] -= 1;
        } else if s < 0.0 {
            wins[b] += 1;
            wins[a] -= 1;
        }
    }
    let mut best = 1;
    for label in 2..=model.num_classes {
        if wins[label] > wins[best] {
            best = label;
        }
    }
    best
}

/// Predictions from a `tests × train` kernel block.
pub fn ovo_predict_from_kernel(model: &OvoSvmModel, cross: &DMatrix<f64>) -> Vec<Label> {
    (0..cross.nrows())
        .map(|r| {
            let row: Vec<f64> = cross.row(r).iter().cloned().collect();
            ovo_vote(model, &row)
        })
        .collect()
}

pub fn ovo_predict_batch(
    model: &OvoSvmModel,
    train: &LabeledDataset,
    kernel: &dyn Kernel,
    tests: &[SpdMatrix],
) -> Result<Vec<Label>> {
    let cross = kernel.cross(tests, train.samples())?;
    Ok(ovo_predict_from_kernel(model, &cross))
}

pub fn ovo_predict(model: &OvoSvmModel, train: &LabeledDataset, kernel: &dyn Kernel, test: &SpdMatrix) -> Result<Label> {
    Ok(ovo_predict_batch(model, train, kernel, std::slice::from_ref(test))?[0])
}

/// Accuracy summary of one prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Index `c − 1` holds the accuracy on class `c`; `None` when absent from the truth.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[t − 1][p − 1]` counts truth `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(predictions: &[Label], truth: &[Label], num_classes: usize) -> Result<Evaluation> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p == 0 || t == 0 || p > num_classes || t > num_classes {
            return Err(Error::invalid(format!("label outside 1..={num_classes}")));
        }
        confusion[t - 1][p - 1] += 1;
    }
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        per_class,
        confusion,
    })
}

/// Two-sided paired t-test on per-split differences `a − b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub std_difference: f64,
    pub t: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Zero spread with zero mean gives `p = 1`; zero spread with nonzero mean gives `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let m = a.len();
    if m < 2 {
        return Err(Error::invalid("a paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / m as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let sd = var.sqrt();
    let dof = m - 1;
    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (sd / (m as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
        (t, (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
    };
    Ok(PairedTTest {
        mean_difference: mean,
        std_difference: sd,
        t,
        dof,
        p_value: p,
    })
}
