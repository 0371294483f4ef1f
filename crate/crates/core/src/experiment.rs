//! Experiment drivers: repeated-split comparisons on synthetic Wishart tasks
//! and Gram-matrix timing across metrics.

use std::time::Instant;

use nalgebra::DVector;

use crate::classify::{
    evaluate, knn_from_distances, knn_predict_batch, ovo_predict_batch, ovo_train, paired_t_test, KnnConfig,
    PairedTTest,
};
use crate::criteria::CriterionId;
use crate::data::{make_wishart_task, sample_wishart, split, Label, LabeledDataset, WishartSpec};
use crate::dsk::{AdjustmentMode, AdjustmentParams};
use crate::error::{Error, Result};
use crate::gram::{distance_matrix, pairwise_distances, DskKernel, Kernel, MetricKernel, SteinKernel};
use crate::learn::{cross_validate, fit, CvOutcome, LearnConfig, StoppingRule, ThetaGrid, DEFAULT_C_GRID};
use crate::model::DskModel;
use crate::spd::{MetricId, SpdMatrix};

/// How test samples are labelled from a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierSpec {
    Knn(KnnConfig),
    Svm { c: f64 },
}

/// Trains on `train` and labels `tests` with the given kernel.
pub fn classify_with_kernel(
    train: &LabeledDataset,
    tests: &[SpdMatrix],
    kernel: &dyn Kernel,
    classifier: ClassifierSpec,
) -> Result<Vec<Label>> {
    match classifier {
        ClassifierSpec::Knn(cfg) => knn_predict_batch(train, kernel, tests, cfg),
        ClassifierSpec::Svm { c } => {
            let model = ovo_train(train, kernel, c)?;
            ovo_predict_batch(&model, train, kernel, tests)
        }
    }
}

/// Labels `tests` with a baseline metric: k-NN on distances for AIRM, the
/// metric's Gaussian kernel otherwise.
pub fn classify_with_metric(
    train: &LabeledDataset,
    tests: &[SpdMatrix],
    metric: MetricId,
    theta: f64,
    classifier: ClassifierSpec,
) -> Result<Vec<Label>> {
    match (metric.admits_kernel(), classifier) {
        (true, _) => classify_with_kernel(train, tests, &MetricKernel { metric, theta }, classifier),
        (false, ClassifierSpec::Knn(cfg)) => {
            let d = distance_matrix(metric, tests, train.samples())?;
            knn_from_distances(&d, train.labels(), cfg)
        }
        (false, ClassifierSpec::Svm { .. }) => Err(Error::UnsupportedKernel(format!(
            "{metric} has no positive definite kernel and cannot drive an SVM"
        ))),
    }
}

/// Picks the alignment regularizer by stratified cross-validation on `train`.
///
/// Each fold runs the full fit (grid `θ`, then `α`) with `ka:λ` and scores
/// the learned kernel with `classifier` on the held-out part.
pub fn tune_reg_lambda(
    train: &LabeledDataset,
    mode: AdjustmentMode,
    stopping: StoppingRule,
    grid: &[f64],
    folds: usize,
    seed: u64,
    classifier: ClassifierSpec,
) -> Result<CvOutcome<f64>> {
    let theta_grid = ThetaGrid::for_dim(train.dim());
    cross_validate(train, folds, seed, grid, |&lambda, fit_set, held_out| {
        let mut config = LearnConfig::new(CriterionId::KernelAlignment(lambda), mode);
        config.stopping = stopping;
        let (_, outcome) = fit(fit_set, &config, &theta_grid, &[])?;
        classify_with_kernel(fit_set, held_out.samples(), &outcome.model.kernel()?, classifier)
    })
}

#[derive(Debug, Clone)]
pub struct WishartStudyConfig {
    pub dim: usize,
    pub dof: usize,
    pub per_class: usize,
    pub taus: Vec<f64>,
    pub splits: usize,
    pub train_fraction: f64,
    pub criterion: CriterionId,
    pub mode: AdjustmentMode,
    pub stopping: StoppingRule,
    pub c_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for WishartStudyConfig {
    fn default() -> Self {
        Self {
            dim: 5,
            dof: 200,
            per_class: 200,
            taus: vec![10f64.powf(-2.5), 0.1, 1.0],
            splits: 20,
            train_fraction: 0.5,
            criterion: CriterionId::RadiusMargin,
            mode: AdjustmentMode::Power,
            stopping: StoppingRule::default(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub split_seed: u64,
    pub theta: f64,
    /// `C` used by the baseline SVM (selected at `α = 1`).
    pub baseline_c: f64,
    /// `C` used by the DSK SVM (learned with `α` for the margin criteria).
    pub dsk_c: f64,
    pub alpha: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub baseline_accuracy: f64,
    pub dsk_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TauOutcome {
    pub tau: f64,
    pub splits: Vec<SplitOutcome>,
    pub mean_baseline: f64,
    pub mean_dsk: f64,
    pub t_test: PairedTTest,
}

impl TauOutcome {
    /// Mean accuracy gain of DSK over the baseline, in percentage points.
    pub fn gain_points(&self) -> f64 {
        100.0 * (self.mean_dsk - self.mean_baseline)
    }
}

/// Accuracy of a trained model and its `α = 1` baseline with an SVM.
fn svm_pair_accuracies(
    train: &LabeledDataset,
    test: &LabeledDataset,
    model: &DskModel,
    baseline_c: f64,
    dsk_c: f64,
) -> Result<(f64, f64)> {
    let base = classify_with_kernel(
        train,
        test.samples(),
        &SteinKernel { theta: model.theta },
        ClassifierSpec::Svm { c: baseline_c },
    )?;
    let dsk = classify_with_kernel(train, test.samples(), &model.kernel()?, ClassifierSpec::Svm { c: dsk_c })?;
    let m = test.num_classes();
    Ok((
        evaluate(&base, test.labels(), m)?.accuracy,
        evaluate(&dsk, test.labels(), m)?.accuracy,
    ))
}

/// One repeated-split comparison of DSK against the Stein kernel with the same `θ`.
pub fn compare_on_splits(dataset: &LabeledDataset, cfg: &WishartStudyConfig, tau: f64) -> Result<TauOutcome> {
    let grid = ThetaGrid::for_dim(dataset.dim());
    let mut learn = LearnConfig::new(cfg.criterion, cfg.mode);
    learn.stopping = cfg.stopping;
    let mut splits = Vec::with_capacity(cfg.splits);
    for s in 0..cfg.splits {
        let split_seed = cfg.seed.wrapping_mul(1_000).wrapping_add(s as u64);
        let idx = split(dataset, cfg.train_fraction, split_seed)?;
        let train = dataset.subset(&idx.train)?;
        let test = dataset.subset(&idx.test)?;
        let (selection, outcome) = fit(&train, &learn, &grid, &cfg.c_grid)?;
        let baseline_c = selection.c.unwrap_or(1.0);
        let dsk_c = outcome.model.c.unwrap_or(baseline_c);
        let (baseline_accuracy, dsk_accuracy) =
            svm_pair_accuracies(&train, &test, &outcome.model, baseline_c, dsk_c)?;
        splits.push(SplitOutcome {
            split_seed,
            theta: selection.theta,
            baseline_c,
            dsk_c,
            alpha: outcome.model.params.alpha().clone(),
            iterations: outcome.model.iterations,
            converged: outcome.converged(),
            baseline_accuracy,
            dsk_accuracy,
        });
    }
    let base: Vec<f64> = splits.iter().map(|s| s.baseline_accuracy).collect();
    let dsk: Vec<f64> = splits.iter().map(|s| s.dsk_accuracy).collect();
    let t_test = paired_t_test(&dsk, &base)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(TauOutcome {
        tau,
        mean_baseline: mean(&base),
        mean_dsk: mean(&dsk),
        splits,
        t_test,
    })
}

/// Two-class Wishart tasks `W_d(I, n)` against `W_d((1+τ)I, n)`, one per `τ`.
pub fn wishart_study(cfg: &WishartStudyConfig) -> Result<Vec<TauOutcome>> {
    if cfg.splits < 2 {
        return Err(Error::invalid("the study needs at least two splits for a paired t-test"));
    }
    cfg.taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            let data_seed = cfg.seed.wrapping_add(i as u64);
            let ds = make_wishart_task(cfg.dim, cfg.dof, tau, cfg.per_class, data_seed)?;
            compare_on_splits(&ds, cfg, tau)
        })
        .collect()
}

/// Similarity computations compared by [`gram_timing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimedMethod {
    /// Distance matrix for AIRM, Gaussian-kernel Gram for the other metrics.
    Metric(MetricId),
    Stein,
    /// DSK with a fixed non-trivial power adjustment.
    Dsk,
}

impl TimedMethod {
    pub fn name(&self) -> String {
        match self {
            TimedMethod::Metric(m) => m.to_string(),
            TimedMethod::Stein => "stein".into(),
            TimedMethod::Dsk => "dsk".into(),
        }
    }

    pub fn all() -> Vec<TimedMethod> {
        let mut out: Vec<TimedMethod> = MetricId::all()
            .into_iter()
            .filter(|m| *m != MetricId::SDivergenceRoot)
            .map(TimedMethod::Metric)
            .collect();
        out.push(TimedMethod::Stein);
        out.push(TimedMethod::Dsk);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: String,
    pub dim: usize,
    pub count: usize,
    pub seconds: f64,
}

/// Random SPD matrices `W_d(I/(2d), 2d)`, normalized so `E[X] = I`.
pub fn random_spd_set(dim: usize, count: usize, seed: u64) -> Result<Vec<SpdMatrix>> {
    let dof = 2 * dim.max(1);
    let spec = WishartSpec::isotropic(dim, dof, 1.0 / dof as f64)?;
    sample_wishart(&spec, count, seed)
}

/// Wall-clock seconds to build the `count × count` similarity matrix, best of `repeats`.
pub fn gram_timing(methods: &[TimedMethod], dim: usize, count: usize, repeats: usize, seed: u64) -> Result<Vec<TimingRow>> {
    let samples = random_spd_set(dim, count, seed)?;
    let alpha = DVector::from_fn(dim, |i, _| 0.75 + 0.5 * i as f64 / dim.max(2) as f64);
    let params = AdjustmentParams::new(AdjustmentMode::Power, alpha)?;
    let theta = 0.5;
    methods
        .iter()
        .map(|&m| {
            let mut best = f64::INFINITY;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                match m {
                    TimedMethod::Metric(MetricId::Airm) => {
                        pairwise_distances(MetricId::Airm, &samples)?;
                    }
                    TimedMethod::Metric(metric) => {
                        MetricKernel { metric, theta }.gram(&samples)?;
                    }
                    TimedMethod::Stein => {
                        SteinKernel { theta }.gram(&samples)?;
                    }
                    TimedMethod::Dsk => {
                        DskKernel::new(theta, params.clone())?.gram(&samples)?;
                    }
                }
                best = best.min(start.elapsed().as_secs_f64());
            }
            Ok(TimingRow {
                method: m.name(),
                dim,
                count,
                seconds: best,
            })
        })
        .collect()
}
