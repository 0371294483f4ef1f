//! Learning criteria for the adjustment parameters.
//!
//! Every criterion is a function of the DSK Gram matrix `K`, so its gradient
//! with respect to `α_z` follows from `∂K/∂α_z` by the chain rule. The
//! radius-margin criteria also depend on the SVM and enclosing-sphere duals;
//! their gradients hold the optimal duals fixed (envelope theorem).
//!
//! Ridged kernel: `k̃ = k + δ/C`, which turns the L2 soft-margin SVM into a
//! hard-margin one on `k̃`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::dsk::AdjustmentParams;
use crate::error::{Error, Result};
use crate::gram::dsk_gram_with_gradient;
use crate::qp::{maximize_on_simplex, maximize_svm_dual, QpOptions, QpReport};

/// Scatter traces at or below this are treated as zero.
pub const SCATTER_FLOOR: f64 = 1e-12;

/// `T_ij = 1` for same-class pairs, `−1` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealKernel {
    matrix: DMatrix<f64>,
}

impl IdealKernel {
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        Self {
            matrix: DMatrix::from_fn(n, n, |i, j| if labels[i] == labels[j] { 1.0 } else { -1.0 }),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// Which objective drives the adjustment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriterionId {
    /// Kernel alignment minus `reg_lambda·‖α − α₀‖²`.
    KernelAlignment(f64),
    ClassSeparability,
    RadiusMargin,
    TraceMargin,
}

impl CriterionId {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CriterionId::KernelAlignment(l) if !(l >= 0.0 && l.is_finite()) => {
                Err(Error::invalid(format!("reg_lambda must be a finite nonnegative number, got {l}")))
            }
            _ => Ok(()),
        }
    }

    /// Alignment and separability are maximized; the margin bounds are minimized.
    pub fn maximize(&self) -> bool {
        matches!(self, CriterionId::KernelAlignment(_) | CriterionId::ClassSeparability)
    }

    /// Whether the criterion also involves the SVM constant `C`.
    pub fn uses_c(&self) -> bool {
        matches!(self, CriterionId::RadiusMargin | CriterionId::TraceMargin)
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriterionId::KernelAlignment(l) => write!(f, "ka:{l:e}"),
            CriterionId::ClassSeparability => write!(f, "cs"),
            CriterionId::RadiusMargin => write!(f, "rm"),
            CriterionId::TraceMargin => write!(f, "tm"),
        }
    }
}

impl FromStr for CriterionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let id = match (head.to_ascii_lowercase().as_str(), arg) {
            ("ka" | "alignment", None) => CriterionId::KernelAlignment(0.0),
            ("ka" | "alignment", Some(a)) => CriterionId::KernelAlignment(
                a.parse()
                    .map_err(|_| Error::invalid(format!("bad reg_lambda '{a}'")))?,
            ),
            ("cs" | "separability", None) => CriterionId::ClassSeparability,
            ("rm" | "radius-margin", None) => CriterionId::RadiusMargin,
            ("tm" | "trace-margin", None) => CriterionId::TraceMargin,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown criterion '{s}' (expected ka[:lambda], cs, rm or tm)"
                )))
            }
        };
        id.validate()?;
        Ok(id)
    }
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `⟨T, K⟩ / √(⟨T, T⟩⟨K, K⟩)`.
pub fn kernel_alignment(k: &DMatrix<f64>, t: &IdealKernel) -> Result<f64> {
    let t = t.matrix();
    if k.shape() != t.shape() {
        return Err(Error::SizeMismatch(format!(
            "kernel is {}x{}, ideal kernel is {}x{}",
            k.nrows(),
            k.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    let kk = frob(k, k);
    if kk == 0.0 {
        return Err(Error::ZeroKernel);
    }
    Ok(frob(t, k) / (frob(t, t) * kk).sqrt())
}

/// Value of a criterion together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    /// `∂J/∂α`.
    pub grad_alpha: DVector<f64>,
    /// `∂J/∂ln C` for the margin criteria.
    pub grad_ln_c: Option<f64>,
}

fn check_classes(dataset: &LabeledDataset) -> Result<()> {
    if dataset.num_classes() < 2 {
        return Err(Error::invalid("criteria need at least two classes"));
    }
    Ok(())
}

fn alignment_from_gram(k: &DMatrix<f64>, grads: &[DMatrix<f64>], t: &IdealKernel) -> Result<(f64, DVector<f64>)> {
    let value = kernel_alignment(k, t)?;
    let t = t.matrix();
    let kk = frob(k, k);
    let norm = (frob(t, t) * kk).sqrt();
    let grad = DVector::from_iterator(
        grads.len(),
        grads.iter().map(|dk| frob(t, dk) / norm - value * frob(k, dk) / kk),
    );
    Ok((value, grad))
}

/// `A(K, T) − reg_lambda·‖α − α₀‖²` and its gradient in `α`.
pub fn alignment_objective(
    dataset: &LabeledDataset,
    theta: f64,
    params: &AdjustmentParams,
    reg_lambda: f64,
) -> Result<Objective> {
    check_classes(dataset)?;
    CriterionId::KernelAlignment(reg_lambda).validate()?;
    params.check_dimension(dataset.dim())?;
    let (gram, grads) = dsk_gram_with_gradient(dataset.samples(), theta, params)?;
    let t = IdealKernel::from_labels(dataset.labels());
    let (a, mut grad) = alignment_from_gram(gram.values(), &grads, &t)?;
    let diff = params.alpha() - params.alpha0();
    grad -= &diff * (2.0 * reg_lambda);
    Ok(Objective {
        value: a - reg_lambda * diff.norm_squared(),
        grad_alpha: grad,
        grad_ln_c: None,
    })
}

/// Between- and within-class scatter traces in the kernel feature space.
///
/// `tr(S_B) = Σ_c 1_cᵀK1_c/n_c − 1ᵀK1/n`, `tr(S_W) = tr(K) − Σ_c 1_cᵀK1_c/n_c`.
/// Both are linear in `K`, so applying this to `∂K` gives the derivatives.
pub fn scatter_traces(k: &DMatrix<f64>, labels: &[usize], num_classes: usize) -> (f64, f64) {
    let n = labels.len();
    let mut class_sum = vec![0.0; num_classes + 1];
    let mut class_count = vec![0usize; num_classes + 1];
    for &l in labels {
        class_count[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = k[(i, j)];
            total += v;
            if labels[i] == labels[j] {
                class_sum[labels[i]] += v;
            }
        }
    }
    let within_means: f64 = (1..=num_classes)
        .filter(|&c| class_count[c] > 0)
        .map(|c| class_sum[c] / class_count[c] as f64)
        .sum();
    (within_means - total / n as f64, k.trace() - within_means)
}

/// `tr(S_B)/tr(S_W)` and its gradient by the quotient rule.
pub fn class_separability(dataset: &LabeledDataset, theta: f64, params: &AdjustmentParams) -> Result<Objective> {
    check_classes(dataset)?;
    params.check_dimension(dataset.dim())?;
    let (gram, grads) = dsk_gram_with_gradient(dataset.samples(), theta, params)?;
    separability_from_gram(gram.values(), &grads, dataset.labels(), dataset.num_classes())
}

fn separability_from_gram(
    k: &DMatrix<f64>,
    grads: &[DMatrix<f64>],
    labels: &[usize],
    num_classes: usize,
) -> Result<Objective> {
    let (b, w) = scatter_traces(k, labels, num_classes);
    if w <= SCATTER_FLOOR {
        return Err(Error::DegenerateScatter { trace: w });
    }
    let grad = DVector::from_iterator(
        grads.len(),
        grads.iter().map(|dk| {
            let (db, dw) = scatter_traces(dk, labels, num_classes);
            (db * w - b * dw) / (w * w)
        }),
    );
    Ok(Objective {
        value: b / w,
        grad_alpha: grad,
        grad_ln_c: None,
    })
}

/// Optimal SVM dual on a ridged kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmDual {
    pub eta: DVector<f64>,
    /// Dual objective at the optimum, equal to `‖w‖²/2`.
    pub objective: f64,
    pub bias: f64,
    pub support: Vec<usize>,
    pub report: QpReport,
}

impl SvmDual {
    pub fn w_norm_sq(&self) -> f64 {
        2.0 * self.objective
    }
}

/// Solves the hard-margin dual on `k̃` with labels `t ∈ {±1}`.
pub fn solve_svm_dual(k_tilde: &DMatrix<f64>, labels: &[f64], opts: &QpOptions) -> Result<SvmDual> {
    let sol = maximize_svm_dual(k_tilde, labels, opts)?;
    let support = (0..sol.x.len()).filter(|&i| sol.x[i] > 0.0).collect();
    Ok(SvmDual {
        eta: sol.x,
        objective: sol.value,
        bias: sol.multiplier,
        support,
        report: sol.report,
    })
}

/// Smallest enclosing sphere in the feature space of `k̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSolution {
    pub beta: DVector<f64>,
    pub radius_sq: f64,
    pub report: QpReport,
}

/// Maximizes `Σβ_i k̃_ii − βᵀK̃β` over the simplex; the optimum is `R²`.
pub fn solve_enclosing_sphere(k_tilde: &DMatrix<f64>, opts: &QpOptions) -> Result<SphereSolution> {
    let diag = k_tilde.diagonal();
    let sol = maximize_on_simplex(k_tilde, &diag, opts)?;
    Ok(SphereSolution {
        beta: sol.x,
        radius_sq: sol.value.max(0.0),
        report: sol.report,
    })
}

/// Ridged kernel `K + I/C`; `C = ∞` leaves `K` unchanged.
pub fn ridged(k: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let mut out = k.clone();
    if c.is_finite() {
        for i in 0..out.nrows() {
            out[(i, i)] += 1.0 / c;
        }
    }
    out
}

pub(crate) fn check_c(c: f64) -> Result<()> {
    if c.is_nan() || c <= 0.0 {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    Ok(())
}

/// Samples of classes `a` and `b` with SVM labels `+1` for `a`, `−1` for `b`.
pub fn pair_members(labels: &[usize], a: usize, b: usize) -> (Vec<usize>, Vec<f64>) {
    let idx: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == a || labels[i] == b)
        .collect();
    let t = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
    (idx, t)
}

pub(crate) fn class_pairs(num_classes: usize) -> Vec<(usize, usize)> {
    (1..=num_classes)
        .flat_map(|a| ((a + 1)..=num_classes).map(move |b| (a, b)))
        .collect()
}

fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// `ηᵀ(ttᵀ ∘ A)η`.
fn label_quadratic(a: &DMatrix<f64>, eta: &DVector<f64>, t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..eta.len() {
        if eta[i] == 0.0 {
            continue;
        }
        for j in 0..eta.len() {
            if eta[j] != 0.0 {
                s += eta[i] * eta[j] * t[i] * t[j] * a[(i, j)];
            }
        }
    }
    s
}

/// Per class-pair terms of the margin bound.
#[derive(Debug, Clone)]
pub struct PairTerm {
    pub classes: (usize, usize),
    pub radius_sq: f64,
    pub w_norm_sq: f64,
    pub dual: SvmDual,
}

/// Margin bound evaluation with its per-pair decomposition.
#[derive(Debug, Clone)]
pub struct MarginEvaluation {
    pub objective: Objective,
    /// `∂J/∂C`.
    pub grad_c: f64,
    pub pairs: Vec<PairTerm>,
}

pub(crate) fn margin_from_gram(
    k: &DMatrix<f64>,
    grads: &[DMatrix<f64>],
    labels: &[usize],
    num_classes: usize,
    c: f64,
    variant: CriterionId,
    opts: &QpOptions,
) -> Result<MarginEvaluation> {
    let d = grads.len();
    let inv_c2 = if c.is_finite() { 1.0 / (c * c) } else { 0.0 };
    let terms: Vec<(PairTerm, DVector<f64>, f64)> = class_pairs(num_classes)
        .into_par_iter()
        .map(|(a, b)| {
            let (idx, t) = pair_members(labels, a, b);
            let l = idx.len();
            let kt = ridged(&principal(k, &idx), c);
            let wrap = |e: Error| Error::PairFailed(a, b, Box::new(e));
            let dual = solve_svm_dual(&kt, &t, opts).map_err(wrap)?;
            let w2 = dual.w_norm_sq();
            let sub_grads: Vec<DMatrix<f64>> = grads.iter().map(|g| principal(g, &idx)).collect();
            // ‖w‖² = 2·(Σ η − ½ηᵀ(ttᵀ∘K̃)η), so ∂‖w‖² = −ηᵀ(ttᵀ∘∂K̃)η.
            let dw_alpha: Vec<f64> = sub_grads.iter().map(|g| -label_quadratic(g, &dual.eta, &t)).collect();
            let dw_c = dual.eta.norm_squared() * inv_c2;

            let (r2, dr_alpha, dr_c): (f64, Vec<f64>, f64) = match variant {
                CriterionId::RadiusMargin => {
                    let sphere = solve_enclosing_sphere(&kt, opts).map_err(wrap)?;
                    let beta = &sphere.beta;
                    // ∂R² = Σβ_i ∂k̃_ii − βᵀ∂K̃β; the DSK diagonal is constant.
                    let dr: Vec<f64> = sub_grads.iter().map(|g| -(beta.transpose() * g * beta)[(0, 0)]).collect();
                    let drc = -(1.0 - beta.norm_squared()) * inv_c2;
                    (sphere.radius_sq, dr, drc)
                }
                _ => {
                    // tr(S_T) = tr(K̃) − 1ᵀK̃1/l.
                    let r2 = kt.trace() - kt.sum() / l as f64;
                    let dr: Vec<f64> = sub_grads.iter().map(|g| g.trace() - g.sum() / l as f64).collect();
                    let drc = -((l - 1) as f64) * inv_c2;
                    (r2, dr, drc)
                }
            };
            let grad = DVector::from_iterator(d, (0..d).map(|z| dr_alpha[z] * w2 + r2 * dw_alpha[z]));
            let grad_c = dr_c * w2 + r2 * dw_c;
            let term = PairTerm {
                classes: (a, b),
                radius_sq: r2,
                w_norm_sq: w2,
                dual,
            };
            Ok((term, grad, grad_c))
        })
        .collect::<Result<_>>()?;

    let mut value = 0.0;
    let mut grad_alpha = DVector::zeros(d);
    let mut grad_c = 0.0;
    let mut pairs = Vec::with_capacity(terms.len());
    for (term, g, gc) in terms {
        value += term.radius_sq * term.w_norm_sq;
        grad_alpha += g;
        grad_c += gc;
        pairs.push(term);
    }
    let grad_ln_c = if c.is_finite() { c * grad_c } else { 0.0 };
    Ok(MarginEvaluation {
        objective: Objective {
            value,
            grad_alpha,
            grad_ln_c: Some(grad_ln_c),
        },
        grad_c,
        pairs,
    })
}

/// `J = Σ_{a<b} R²_ab ‖w_ab‖²` over class pairs, with gradients in `α`, `C` and `ln C`.
///
/// `variant` is [`CriterionId::RadiusMargin`] (enclosing-sphere radius) or
/// [`CriterionId::TraceMargin`] (total scatter trace of the pair on `k̃`).
pub fn radius_margin_objective(
    dataset: &LabeledDataset,
    theta: f64,
    params: &AdjustmentParams,
    c: f64,
    variant: CriterionId,
    opts: &QpOptions,
) -> Result<MarginEvaluation> {
    if !variant.uses_c() {
        return Err(Error::invalid(format!("{variant} is not a margin criterion")));
    }
    check_classes(dataset)?;
    check_c(c)?;
    params.check_dimension(dataset.dim())?;
    let (gram, grads) = dsk_gram_with_gradient(dataset.samples(), theta, params)?;
    margin_from_gram(gram.values(), &grads, dataset.labels(), dataset.num_classes(), c, variant, opts)
}

/// Evaluates any criterion; `c` is required by the margin criteria and ignored otherwise.
pub fn evaluate_criterion(
    dataset: &LabeledDataset,
    theta: f64,
    params: &AdjustmentParams,
    criterion: CriterionId,
    c: Option<f64>,
) -> Result<Objective> {
    criterion.validate()?;
    match criterion {
        CriterionId::KernelAlignment(l) => alignment_objective(dataset, theta, params, l),
        CriterionId::ClassSeparability => class_separability(dataset, theta, params),
        CriterionId::RadiusMargin | CriterionId::TraceMargin => {
            let c = c.ok_or_else(|| Error::invalid(format!("{criterion} needs a value of C")))?;
            Ok(radius_margin_objective(dataset, theta, params, c, criterion, &QpOptions::default())?.objective)
        }
    }
}

/// Analytic against central-difference gradients.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Per component `|a − f| / max(|f|, 1e-3·‖f‖∞, 1e-8)`.
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
}

impl GradientCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Compares the analytic gradient with central differences of step `h`.
///
/// Components are `α_1..α_d`, followed by `ln C` for the margin criteria.
pub fn gradient_check(
    dataset: &LabeledDataset,
    theta: f64,
    params: &AdjustmentParams,
    criterion: CriterionId,
    c: Option<f64>,
    h: f64,
) -> Result<GradientCheck> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let base = evaluate_criterion(dataset, theta, params, criterion, c)?;
    let mut analytic: Vec<f64> = base.grad_alpha.iter().cloned().collect();
    let at = |alpha: &DVector<f64>, c: Option<f64>| -> Result<f64> {
        let p = params.with_alpha(alpha.clone())?;
        Ok(evaluate_criterion(dataset, theta, &p, criterion, c)?.value)
    };
    let mut numeric = Vec::with_capacity(analytic.len() + 1);
    for z in 0..params.dim() {
        let mut plus = params.alpha().clone();
        let mut minus = params.alpha().clone();
        plus[z] += h;
        minus[z] -= h;
        numeric.push((at(&plus, c)? - at(&minus, c)?) / (2.0 * h));
    }
    if let (Some(g), Some(c)) = (base.grad_ln_c, c) {
        analytic.push(g);
        let up = c * h.exp();
        let down = c * (-h).exp();
        numeric.push((at(params.alpha(), Some(up))? - at(params.alpha(), Some(down))?) / (2.0 * h));
    }
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let relative_errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1e-3 * scale).max(1e-8))
        .collect();
    let max_relative_error = relative_errors.iter().cloned().fold(0.0, f64::max);
    Ok(GradientCheck {
        analytic,
        numeric,
        relative_errors,
        max_relative_error,
    })
}
