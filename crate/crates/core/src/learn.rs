//! Kernel-parameter selection and adjustment learning.
//!
//! `θ` is chosen first on a grid at `α = 1` (jointly with `C` for the margin
//! criteria), then `α` is learned with `θ` fixed. Each iteration backtracks
//! from a unit step along a limited-memory BFGS direction (the gradient on
//! the first iteration or when the quasi-Newton step fails) until the
//! Armijo condition holds, so accepted values never get worse. For the margin
//! criteria `ln C` is optimized alongside `α`, which keeps `C` positive
//! without a projection.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::criteria::{evaluate_criterion, kernel_alignment, margin_from_gram, CriterionId, IdealKernel};
use crate::data::{stratified_folds, Label, LabeledDataset};
use crate::dsk::{AdjustmentMode, AdjustmentParams};
use crate::error::{Error, Result};
use crate::gram::s_divergence_matrix;
use crate::model::DskModel;
use crate::qp::QpOptions;

/// C values searched together with `θ` by the margin criteria.
pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// Regularization weights searched for kernel alignment.
pub const DEFAULT_REG_GRID: [f64; 4] = [0.0, 1e-3, 1e-2, 1e-1];

/// Lower bound on coefficient-mode entries.
pub const COEFFICIENT_FLOOR: f64 = 1e-6;

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_HALVINGS: usize = 50;
/// Curvature pairs kept for the quasi-Newton direction.
const MEMORY: usize = 5;

/// Candidate `θ` values, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    values: Vec<f64>,
}

impl ThetaGrid {
    /// Half-integers `1/2, …, (d−1)/2` where the Stein kernel is Mercer.
    pub fn base(dim: usize) -> Vec<f64> {
        (1..dim).map(|k| k as f64 / 2.0).collect()
    }

    /// The base set followed by `(d−1)/2 · 2^j`, `j = 1..4`.
    ///
    /// For `d = 1` every `θ > 0` is admissible; the grid is `2^j/4`, `j = 0..4`.
    pub fn for_dim(dim: usize) -> Self {
        if dim <= 1 {
            return Self {
                values: (0..5).map(|j| 0.25 * 2f64.powi(j)).collect(),
            };
        }
        let top = (dim - 1) as f64 / 2.0;
        let mut values = Self::base(dim);
        values.extend((1..=4).map(|j| top * 2f64.powi(j)));
        Self { values }
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("theta grid is empty"));
        }
        if values.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("theta values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("theta grid must be strictly ascending"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_tol: 1e-5,
        }
    }
}

impl StoppingRule {
    pub fn new(max_iters: usize, rel_tol: f64) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::invalid("at least one iteration is required"));
        }
        if rel_tol.is_nan() || rel_tol <= 0.0 {
            return Err(Error::invalid(format!("relative tolerance must be positive, got {rel_tol}")));
        }
        Ok(Self { max_iters, rel_tol })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScore {
    pub theta: f64,
    pub c: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSelection {
    pub theta: f64,
    pub c: Option<f64>,
    pub value: f64,
    pub scores: Vec<GridScore>,
}

/// Grid search at `α = 1`.
///
/// Alignment and separability pick the `θ` of highest (unregularized)
/// alignment; the margin criteria pick the `(θ, C)` of smallest bound.
/// Ties keep the earliest grid point, so the smallest `θ` (then `C`) wins.
pub fn select_theta(
    dataset: &LabeledDataset,
    criterion: CriterionId,
    grid: &ThetaGrid,
    c_grid: &[f64],
) -> Result<ThetaSelection> {
    criterion.validate()?;
    if dataset.num_classes() < 2 {
        return Err(Error::invalid("theta selection needs at least two classes"));
    }
    let divergence = s_divergence_matrix(dataset.samples())?;
    let gram = |theta: f64| stein_gram_from_divergence(&divergence, theta);
    let scores: Vec<GridScore> = if criterion.uses_c() {
        if c_grid.is_empty() {
            return Err(Error::invalid("C grid is empty"));
        }
        for &c in c_grid {
            crate::criteria::check_c(c)?;
        }
        let points: Vec<(f64, f64)> = grid
            .values()
            .iter()
            .flat_map(|&t| c_grid.iter().map(move |&c| (t, c)))
            .collect();
        let opts = QpOptions::default();
        points
            .into_par_iter()
            .map(|(theta, c)| {
                let eval = margin_from_gram(
                    &gram(theta),
                    &[],
                    dataset.labels(),
                    dataset.num_classes(),
                    c,
                    criterion,
                    &opts,
                )?;
                Ok(GridScore {
                    theta,
                    c: Some(c),
                    value: eval.objective.value,
                })
            })
            .collect::<Result<_>>()?
    } else {
        let ideal = IdealKernel::from_labels(dataset.labels());
        grid.values()
            .par_iter()
            .map(|&theta| {
                Ok(GridScore {
                    theta,
                    c: None,
                    value: kernel_alignment(&gram(theta), &ideal)?,
                })
            })
            .collect::<Result<_>>()?
    };
    let better = |a: f64, b: f64| if criterion.uses_c() { a < b } else { a > b };
    let mut best = scores[0];
    for s in &scores[1..] {
        if better(s.value, best.value) {
            best = *s;
        }
    }
    Ok(ThetaSelection {
        theta: best.theta,
        c: best.c,
        value: best.value,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub criterion: CriterionId,
    pub mode: AdjustmentMode,
    pub stopping: StoppingRule,
    /// Initial `C`; required by the margin criteria.
    pub c: Option<f64>,
    /// Optimize `ln C` alongside `α` for the margin criteria.
    pub learn_c: bool,
}

impl LearnConfig {
    pub fn new(criterion: CriterionId, mode: AdjustmentMode) -> Self {
        Self {
            criterion,
            mode,
            stopping: StoppingRule::default(),
            c: None,
            learn_c: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `|J_{t+1} − J_t| ≤ τ·|J_t|`.
    RelativeChange,
    /// No step length satisfied the Armijo condition.
    LineSearch,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub model: DskModel,
    /// Criterion value at `α₀` followed by the value after each accepted step.
    pub history: Vec<f64>,
    pub stop: StopReason,
}

impl LearnOutcome {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIterations
    }
}

struct Problem<'a> {
    dataset: &'a LabeledDataset,
    theta: f64,
    config: LearnConfig,
    alpha0: DVector<f64>,
    optimize_c: bool,
    sign: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.alpha0.len()
    }

    fn split(&self, v: &DVector<f64>) -> Result<(AdjustmentParams, Option<f64>)> {
        let d = self.dim();
        let alpha = v.rows(0, d).into_owned();
        let params = AdjustmentParams::with_prior(self.config.mode, alpha, self.alpha0.clone())?;
        let c = if self.optimize_c { Some(v[d].exp()) } else { self.config.c };
        Ok((params, c))
    }

    /// Criterion value and the gradient of `sign·J` in the optimization variables.
    fn eval(&self, v: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (params, c) = self.split(v)?;
        let obj = evaluate_criterion(self.dataset, self.theta, &params, self.config.criterion, c)?;
        let mut g: Vec<f64> = obj.grad_alpha.iter().map(|x| self.sign * x).collect();
        if self.optimize_c {
            g.push(self.sign * obj.grad_ln_c.unwrap_or(0.0));
        }
        Ok((obj.value, DVector::from_vec(g)))
    }

    /// Backtracking from a unit step along `direction` until the Armijo
    /// condition holds at the projected point.
    fn line_search(
        &self,
        v: &DVector<f64>,
        value: f64,
        grad: &DVector<f64>,
        direction: &DVector<f64>,
    ) -> Option<(DVector<f64>, f64, DVector<f64>)> {
        let mut step = 1.0;
        for _ in 0..MAX_HALVINGS {
            let candidate = self.project(v + direction * step);
            let delta = &candidate - v;
            if delta.iter().all(|&x| x == 0.0) {
                return None;
            }
            let required = self.sign * value + ARMIJO_C * grad.dot(&delta);
            // Points where the criterion fails (degenerate scatter, QP cap) are rejected like poor steps.
            if let Ok((cand_value, cand_grad)) = self.eval(&candidate) {
                if cand_value.is_finite() && self.sign * cand_value >= required {
                    return Some((candidate, cand_value, cand_grad));
                }
            }
            step *= SHRINK;
        }
        None
    }

    fn project(&self, mut v: DVector<f64>) -> DVector<f64> {
        if self.config.mode == AdjustmentMode::Coefficient {
            for i in 0..self.dim() {
                v[i] = v[i].max(COEFFICIENT_FLOOR);
            }
        }
        v
    }
}

/// Limited-memory BFGS pairs for ascent on `sign·J`.
///
/// `y` is the decrease of the ascent gradient, so `sᵀy > 0` near a maximum.
#[derive(Default)]
struct Memory {
    pairs: VecDeque<(DVector<f64>, DVector<f64>)>,
}

impl Memory {
    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy.is_nan() || sy <= 1e-12 * s.norm() * y.norm() {
            return;
        }
        if self.pairs.len() == MEMORY {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
    }

    /// Two-loop recursion; the plain gradient while no pairs are stored.
    fn direction(&self, grad: &DVector<f64>) -> DVector<f64> {
        let Some((s_last, y_last)) = self.pairs.back() else {
            return grad.clone();
        };
        let mut q = grad.clone();
        let mut coefficients = Vec::with_capacity(self.pairs.len());
        for (s, y) in self.pairs.iter().rev() {
            let rho = 1.0 / s.dot(y);
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            coefficients.push((rho, a));
        }
        q *= s_last.dot(y_last) / y_last.norm_squared();
        for ((s, y), (rho, a)) in self.pairs.iter().zip(coefficients.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        q
    }
}

fn non_finite(iteration: usize, v: &DVector<f64>, d: usize) -> Error {
    Error::NonFinite {
        iteration,
        alpha: v.rows(0, d).iter().cloned().collect(),
    }
}

/// Learns `α` (and `C` for the margin criteria) with `θ` fixed, starting at `α₀ = 1`.
pub fn learn_alpha(dataset: &LabeledDataset, theta: f64, config: &LearnConfig) -> Result<LearnOutcome> {
    let criterion = config.criterion;
    criterion.validate()?;
    if dataset.num_classes() < 2 {
        return Err(Error::invalid("learning needs at least two classes"));
    }
    StoppingRule::new(config.stopping.max_iters, config.stopping.rel_tol)?;
    if criterion.uses_c() {
        match config.c {
            Some(c) if c > 0.0 && c.is_finite() => {}
            Some(c) => return Err(Error::invalid(format!("C must be positive and finite, got {c}"))),
            None => return Err(Error::invalid(format!("{criterion} needs an initial C"))),
        }
    }
    let d = dataset.dim();
    let problem = Problem {
        dataset,
        theta,
        config: *config,
        alpha0: DVector::from_element(d, 1.0),
        optimize_c: criterion.uses_c() && config.learn_c,
        sign: if criterion.maximize() { 1.0 } else { -1.0 },
    };
    let mut v = problem.alpha0.clone();
    if problem.optimize_c {
        v = v.push(config.c.expect("checked above").ln());
    }
    let (mut value, mut grad) = problem.eval(&v)?;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(non_finite(0, &v, d));
    }
    let mut history = vec![value];
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let mut memory = Memory::default();
    for t in 1..=config.stopping.max_iters {
        let mut direction = memory.direction(&grad);
        if grad.dot(&direction) <= 0.0 {
            memory.clear();
            direction = grad.clone();
        }
        let mut accepted = problem.line_search(&v, value, &grad, &direction);
        if accepted.is_none() && !memory.is_empty() {
            memory.clear();
            accepted = problem.line_search(&v, value, &grad, &grad);
        }
        let Some((candidate, new_value, new_grad)) = accepted else {
            stop = StopReason::LineSearch;
            break;
        };
        if new_grad.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(t, &candidate, d));
        }
        iterations = t;
        memory.push(&candidate - &v, &grad - &new_grad);
        let change = (new_value - value).abs();
        let previous = value;
        v = candidate;
        value = new_value;
        grad = new_grad;
        history.push(value);
        if change <= config.stopping.rel_tol * previous.abs() {
            stop = StopReason::RelativeChange;
            break;
        }
    }
    let (params, c) = problem.split(&v)?;
    let model = DskModel {
        theta,
        params,
        criterion,
        c,
        objective: value,
        iterations,
        fingerprint: dataset.fingerprint(),
        svm: None,
    };
    Ok(LearnOutcome { model, history, stop })
}

/// `select_theta` followed by `learn_alpha` at the selected `θ` (and `C`).
pub fn fit(
    dataset: &LabeledDataset,
    config: &LearnConfig,
    grid: &ThetaGrid,
    c_grid: &[f64],
) -> Result<(ThetaSelection, LearnOutcome)> {
    let selection = select_theta(dataset, config.criterion, grid, c_grid)?;
    let config = LearnConfig {
        c: selection.c.or(config.c),
        ..*config
    };
    let outcome = learn_alpha(dataset, selection.theta, &config)?;
    Ok((selection, outcome))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome<P> {
    pub best: P,
    pub best_index: usize,
    /// Pooled validation accuracy of each grid point.
    pub scores: Vec<f64>,
}

/// Stratified `folds`-fold cross-validation over `grid` on `dataset` alone.
///
/// `predict(point, train, validation)` returns labels for the validation
/// samples. Accuracy is pooled over folds; ties keep the first grid point.
pub fn cross_validate<P, F>(dataset: &LabeledDataset, folds: usize, seed: u64, grid: &[P], predict: F) -> Result<CvOutcome<P>>
where
    P: Clone + Sync,
    F: Fn(&P, &LabeledDataset, &LabeledDataset) -> Result<Vec<Label>> + Sync,
{
    if grid.is_empty() {
        return Err(Error::invalid("cross-validation grid is empty"));
    }
    for (c, &count) in dataset.class_counts().iter().enumerate() {
        if count < folds {
            return Err(Error::InsufficientClassSamples {
                label: c + 1,
                count,
                required: folds,
            });
        }
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let parts = stratified_folds(dataset.labels(), &all, folds, seed)?;
    let splits: Vec<(LabeledDataset, LabeledDataset)> = parts
        .iter()
        .map(|val| {
            let train: Vec<usize> = all.iter().copied().filter(|i| val.binary_search(i).is_err()).collect();
            Ok((dataset.subset(&train)?, dataset.subset(val)?))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|point| {
            let mut correct = 0usize;
            for (train, val) in &splits {
                let pred = predict(point, train, val)?;
                if pred.len() != val.len() {
                    return Err(Error::LengthMismatch {
                        left: pred.len(),
                        right: val.len(),
                    });
                }
                correct += pred.iter().zip(val.labels()).filter(|(p, t)| p == t).count();
            }
            Ok(correct as f64 / dataset.len() as f64)
        })
        .collect::<Result<_>>()?;
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(CvOutcome {
        best: grid[best_index].clone(),
        best_index,
        scores,
    })
}

/// Stein Gram `exp(−θS)` from a precomputed divergence matrix.
pub fn stein_gram_from_divergence(divergence: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    divergence.map(|s| (-theta * s).exp())
}
