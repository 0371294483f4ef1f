//! Quadratic programs behind the radius-margin criteria.
//!
//! Both feasible sets have the shape `{x ≥ 0, yᵀx = c}` with `y ∈ {±1}ⁿ`:
//! the probability simplex (`y = 1`, `c = 1`) and the SVM dual (`y = t`,
//! `c = 0`). One pairwise coordinate-ascent engine serves both. Each step
//! moves along a direction that keeps `yᵀx` fixed, clipped at the
//! nonnegativity bound, so every iterate is feasible and the objective never
//! decreases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default KKT tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Curvature below this is treated as zero along a pair direction.
const CURVATURE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpReport {
    pub iterations: usize,
    /// Maximal KKT violation `max_up F − min_low F` at the returned point.
    pub residual: f64,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tolerance: f64,
    /// Defaults to `10·l²` (at least 1000) when `None`.
    pub max_iterations: Option<usize>,
    /// Record the objective after every iteration in [`QpSolution::trace`].
    pub record_trace: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            record_trace: false,
        }
    }
}

impl QpOptions {
    fn cap(&self, l: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| (10 * l * l).max(1000))
    }
}

/// Solution of a QP together with its convergence report.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub report: QpReport,
    /// Multiplier of the equality constraint (the SVM bias for the dual).
    pub multiplier: f64,
    pub trace: Vec<f64>,
}

/// Maximizes `pᵀx − ½ xᵀHx` over `{x ≥ 0, yᵀx = yᵀx₀}` starting from feasible `x0`.
fn pairwise_ascent(
    p: &DVector<f64>,
    h: &DMatrix<f64>,
    y: &[f64],
    mut x: DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let l = p.len();
    let cap = opts.cap(l);
    // g = p − Hx is the ascent gradient; F_i = y_i g_i.
    let mut g = p - h * &x;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(0.5 * (p.dot(&x) + g.dot(&x)));
    }
    let mut iterations = 0;
    let mut residual;
    loop {
        let (i, f_up, f_low) = select_first(&g, y, &x);
        residual = match i {
            Some(_) => (f_up - f_low).max(0.0),
            None => 0.0,
        };
        if residual <= opts.tolerance || iterations >= cap {
            break;
        }
        let i = i.expect("violating pair implies a candidate");
        let fi = y[i] * g[i];

        // Second-order choice of j among I_low with F_j < F_i.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..l {
            if !in_low(y[j], x[j]) {
                continue;
            }
            let fj = y[j] * g[j];
            let gap = fi - fj;
            if gap <= 0.0 {
                continue;
            }
            let a = (h[(i, i)] + h[(j, j)] - 2.0 * y[i] * y[j] * h[(i, j)]).max(CURVATURE_EPS);
            let gain = gap * gap / a;
            if best.is_none_or(|(_, bg)| gain > bg) {
                best = Some((j, gain));
            }
        }
        let (j, _) = best.expect("violating pair implies a partner");
        let fj = y[j] * g[j];

        // Direction: x_i += s y_i, x_j −= s y_j keeps yᵀx fixed.
        let curvature = h[(i, i)] + h[(j, j)] - 2.0 * y[i] * y[j] * h[(i, j)];
        let mut limit = f64::INFINITY;
        if y[i] < 0.0 {
            limit = limit.min(x[i]);
        }
        if y[j] > 0.0 {
            limit = limit.min(x[j]);
        }
        let step = if curvature > CURVATURE_EPS {
            ((fi - fj) / curvature).min(limit)
        } else if limit.is_finite() {
            limit
        } else {
            return Err(Error::Infeasible(
                "dual objective is unbounded (classes are not separable under this kernel)".into(),
            ));
        };
        let (old_i, old_j) = (x[i], x[j]);
        x[i] = (old_i + step * y[i]).max(0.0);
        x[j] = (old_j - step * y[j]).max(0.0);
        // Land exactly on the bound that clipped the step.
        if step == limit {
            if y[i] < 0.0 && old_i == limit {
                x[i] = 0.0;
            }
            if y[j] > 0.0 && old_j == limit {
                x[j] = 0.0;
            }
        }
        let di = x[i] - old_i;
        let dj = x[j] - old_j;
        for k in 0..l {
            g[k] -= h[(k, i)] * di + h[(k, j)] * dj;
        }
        iterations += 1;
        if opts.record_trace {
            trace.push(0.5 * (p.dot(&x) + g.dot(&x)));
        }
    }

    let value = 0.5 * (p.dot(&x) + g.dot(&x));
    let multiplier = equality_multiplier(&g, y, &x);
    let converged = residual <= opts.tolerance;
    let report = QpReport {
        iterations,
        residual,
        objective: value,
        converged,
    };
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }
    Ok(QpSolution {
        x,
        value,
        report,
        multiplier,
        trace,
    })
}

#[inline]
fn in_up(y: f64, x: f64) -> bool {
    y > 0.0 || x > 0.0
}

#[inline]
fn in_low(y: f64, x: f64) -> bool {
    y < 0.0 || x > 0.0
}

/// Returns the maximizer of F over I_up together with `max_up F` and `min_low F`.
fn select_first(g: &DVector<f64>, y: &[f64], x: &DVector<f64>) -> (Option<usize>, f64, f64) {
    let mut best_up: Option<usize> = None;
    let mut f_up = f64::NEG_INFINITY;
    let mut f_low = f64::INFINITY;
    for k in 0..g.len() {
        let f = y[k] * g[k];
        if in_up(y[k], x[k]) && f > f_up {
            f_up = f;
            best_up = Some(k);
        }
        if in_low(y[k], x[k]) && f < f_low {
            f_low = f;
        }
    }
    if !f_low.is_finite() {
        return (None, f_up, f_low);
    }
    (best_up, f_up, f_low)
}

/// Mean of `F_i` over the support; the midpoint of the KKT interval if empty.
fn equality_multiplier(g: &DVector<f64>, y: &[f64], x: &DVector<f64>) -> f64 {
    let support: Vec<f64> = (0..g.len()).filter(|&k| x[k] > 0.0).map(|k| y[k] * g[k]).collect();
    if !support.is_empty() {
        return support.iter().sum::<f64>() / support.len() as f64;
    }
    let (_, up, low) = select_first(g, y, x);
    0.5 * (up + low)
}

fn check_square(q: &DMatrix<f64>, len: usize) -> Result<()> {
    if q.nrows() != len || q.ncols() != len {
        return Err(Error::SizeMismatch(format!(
            "{}x{} matrix for {} variables",
            q.nrows(),
            q.ncols(),
            len
        )));
    }
    if len == 0 {
        return Err(Error::SizeMismatch("empty problem".into()));
    }
    Ok(())
}

/// Euclidean projection onto the probability simplex (sort-based, exact).
pub fn project_onto_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().cloned().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.map(|x| (x - shift).max(0.0))
}

/// Maximizes `dᵀβ − βᵀQβ` over the probability simplex.
pub fn maximize_on_simplex(q: &DMatrix<f64>, d: &DVector<f64>, opts: &QpOptions) -> Result<QpSolution> {
    check_square(q, d.len())?;
    let l = d.len();
    let start = DVector::from_element(l, 1.0 / l as f64);
    maximize_on_simplex_from(q, d, start, opts)
}

/// As [`maximize_on_simplex`], starting from the projection of `start`.
pub fn maximize_on_simplex_from(
    q: &DMatrix<f64>,
    d: &DVector<f64>,
    start: DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    check_square(q, d.len())?;
    let l = d.len();
    let start = project_onto_simplex(&start);
    let h = q * 2.0;
    let y = vec![1.0; l];
    pairwise_ascent(d, &h, &y, start, opts)
}

/// Maximizes `Σηᵢ − ½ ΣΣ ηᵢηⱼ tᵢtⱼ k̃ᵢⱼ` subject to `Σ ηᵢtᵢ = 0`, `η ≥ 0`.
///
/// `kernel` is the (ridged) kernel matrix; labels are folded in here.
pub fn maximize_svm_dual(kernel: &DMatrix<f64>, labels: &[f64], opts: &QpOptions) -> Result<QpSolution> {
    check_square(kernel, labels.len())?;
    if labels.iter().any(|&t| t != 1.0 && t != -1.0) {
        return Err(Error::invalid("SVM labels must be +1 or -1"));
    }
    let has_pos = labels.iter().any(|&t| t > 0.0);
    let has_neg = labels.iter().any(|&t| t < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::Infeasible(
            "both labels must be present; only eta = 0 is feasible".into(),
        ));
    }
    let l = labels.len();
    let h = DMatrix::from_fn(l, l, |i, j| labels[i] * labels[j] * kernel[(i, j)]);
    let p = DVector::from_element(l, 1.0);
    pairwise_ascent(&p, &h, labels, DVector::zeros(l), opts)
}
