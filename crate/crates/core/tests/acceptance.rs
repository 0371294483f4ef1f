//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p dsk --test acceptance --release` for realistic
//! timings. The Wishart study dominates the runtime.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dsk::criteria::{gradient_check, ridged, solve_enclosing_sphere, solve_svm_dual};
use dsk::data::{eigenvalue_bias_experiment, make_wishart_task, split, stream_rng, NormalSampler};
use dsk::experiment::{gram_timing, tune_reg_lambda, wishart_study, ClassifierSpec, TimedMethod, WishartStudyConfig};
use dsk::learn::{StopReason, DEFAULT_REG_GRID};
use dsk::qp::QpOptions;
use dsk::{
    dsk_kernel, learn_alpha, s_divergence, select_theta, stein_kernel, AdjustmentMode, AdjustmentParams, CriterionId,
    DskKernel, Kernel, LearnConfig, MetricId, StoppingRule, SpdMatrix, SteinKernel, ThetaGrid,
};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

const MODES: [AdjustmentMode; 2] = [AdjustmentMode::Power, AdjustmentMode::Coefficient];

struct Gen {
    normal: NormalSampler<ChaCha8Rng>,
}

impl Gen {
    fn new(seed: u64) -> Self {
        Self {
            normal: NormalSampler::new(stream_rng(seed, 0)),
        }
    }

    fn normal(&mut self) -> f64 {
        self.normal.sample()
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.normal.rng_mut().random::<f64>()
    }

    fn index(&mut self, n: usize) -> usize {
        self.normal.rng_mut().random_range(0..n)
    }

    fn gaussian(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.normal())
    }

    /// `Q₁ diag(s) Q₂` with `ln s` uniform on `[−spread, spread]`.
    fn conditioned(&mut self, d: usize, spread: f64) -> DMatrix<f64> {
        let q1 = self.gaussian(d, d).qr().q();
        let q2 = self.gaussian(d, d).qr().q();
        let s = DVector::from_fn(d, |_, _| self.uniform(-spread, spread).exp());
        q1 * DMatrix::from_diagonal(&s) * q2
    }

    /// Random rotation with log-normal spectrum of log-spread `spread`.
    fn spd(&mut self, d: usize, spread: f64) -> SpdMatrix {
        let q = self.gaussian(d, d).qr().q();
        let eig = DVector::from_fn(d, |_, _| (spread * self.normal()).exp());
        SpdMatrix::from_eigen(q, eig).unwrap()
    }
}

fn criterion_1() -> Outcome {
    let mut g = Gen::new(101);
    let mut worst = 0.0f64;
    for d in [2, 5, 10] {
        let grid = ThetaGrid::base(d);
        for _ in 0..200 {
            let x = g.spd(d, 1.0);
            let y = g.spd(d, 1.0);
            let theta = grid[g.index(grid.len())];
            let sk = stein_kernel(&x, &y, theta).unwrap();
            for mode in MODES {
                let p = AdjustmentParams::identity(d, mode);
                let k = dsk_kernel(&x, &y, theta, &p).unwrap();
                worst = worst.max((k - sk).abs());
            }
        }
    }
    (worst <= 1e-12, format!("max |DSK(1) - SK| = {worst:.2e} over 600 pairs"))
}

fn criterion_2() -> Outcome {
    let mut worst_smooth = 0.0f64;
    let mut worst_margin = 0.0f64;
    let mut failures = 0;
    let c = 1.0;
    for seed in 0..20u64 {
        let ds = make_wishart_task(4, 10, 0.5, 6, 1000 + seed).unwrap();
        let mut g = Gen::new(2000 + seed);
        let theta = 1.0;
        for mode in MODES {
            let alpha = DVector::from_fn(4, |_, _| g.uniform(0.7, 1.3));
            let params = AdjustmentParams::new(mode, alpha).unwrap();
            let checks = [
                (CriterionId::KernelAlignment(0.01), None, 1e-5, 1e-4),
                (CriterionId::ClassSeparability, None, 1e-5, 1e-4),
                (CriterionId::RadiusMargin, Some(c), 1e-6, 5e-3),
                (CriterionId::TraceMargin, Some(c), 1e-6, 5e-3),
            ];
            for (criterion, c, h, tol) in checks {
                let check = gradient_check(&ds, theta, &params, criterion, c, h).unwrap();
                let e = check.max_relative_error;
                if c.is_some() {
                    worst_margin = worst_margin.max(e);
                } else {
                    worst_smooth = worst_smooth.max(e);
                }
                if !check.passes(tol) {
                    failures += 1;
                }
            }
        }
    }
    (
        failures == 0,
        format!("ka/cs max rel err {worst_smooth:.2e}, rm/tm max rel err {worst_margin:.2e}, {failures} failing of 160"),
    )
}

fn criterion_3() -> Outcome {
    let mut g = Gen::new(303);
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for d in [3, 5, 8] {
        let samples: Vec<SpdMatrix> = (0..30).map(|_| g.spd(d, 0.7)).collect();
        for theta in ThetaGrid::base(d) {
            let mut grams = vec![SteinKernel { theta }.gram(&samples).unwrap().into_values()];
            for mode in MODES {
                let alpha = DVector::from_fn(d, |_, _| g.uniform(0.5, 1.5));
                let params = AdjustmentParams::new(mode, alpha).unwrap();
                grams.push(DskKernel::new(theta, params).unwrap().gram(&samples).unwrap().into_values());
            }
            for k in grams {
                let min = k.clone().symmetric_eigenvalues().min();
                let rel = min / k.trace();
                worst = worst.min(rel);
                if min < -1e-8 * k.trace() {
                    failures += 1;
                }
            }
        }
    }
    (failures == 0, format!("smallest min-eig/trace {worst:.2e}, {failures} non-PSD Gram matrices"))
}

fn criterion_4() -> Outcome {
    let mut g = Gen::new(404);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let d = 2 + g.index(7);
        let spread = g.uniform(0.1, 2.0);
        let (x, y, z) = (g.spd(d, spread), g.spd(d, spread), g.spd(d, spread));
        let r = |a: &SpdMatrix, b: &SpdMatrix| s_divergence(a, b).unwrap().sqrt();
        worst = worst.min(r(&x, &y) + r(&y, &z) - r(&x, &z));
    }
    (worst >= -1e-10, format!("min triangle slack {worst:.3e} over 1000 triples"))
}

fn criterion_5() -> Outcome {
    let mut g = Gen::new(505);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d = 2 + g.index(7);
        let x = g.spd(d, 1.0);
        let y = g.spd(d, 1.0);
        let w = g.conditioned(d, 1.5);
        let congruent = |m: &SpdMatrix| SpdMatrix::new(w.transpose() * m.entries() * &w).unwrap();
        let s = s_divergence(&x, &y).unwrap();
        let t = s_divergence(&congruent(&x), &congruent(&y)).unwrap();
        worst = worst.max((t - s).abs() / s.abs().max(1.0));
    }
    (worst <= 1e-8, format!("max scaled |S(WXW, WYW) - S(X, Y)| = {worst:.2e}"))
}

/// Mean test accuracy of the likelihood-ratio rule `tr X > c`, which is
/// Bayes optimal for `W(I, n)` against `W((1+τ)I, n)`.
fn trace_rule_accuracy(cfg: &WishartStudyConfig, data_seed: u64, tau: f64, split_seeds: &[u64]) -> f64 {
    let ds = make_wishart_task(cfg.dim, cfg.dof, tau, cfg.per_class, data_seed).unwrap();
    let dof = (cfg.dof * cfg.dim) as f64;
    let cut = dof * (1.0 + tau).ln() / (1.0 - 1.0 / (1.0 + tau));
    let total: f64 = split_seeds
        .iter()
        .map(|&seed| {
            let idx = split(&ds, cfg.train_fraction, seed).unwrap();
            let correct = idx
                .test
                .iter()
                .filter(|&&j| (ds.samples()[j].entries().trace() > cut) == (ds.labels()[j] == 2))
                .count();
            correct as f64 / idx.test.len() as f64
        })
        .sum();
    total / split_seeds.len() as f64
}

fn criterion_6() -> Outcome {
    let cfg = WishartStudyConfig::default();
    let outcomes = wishart_study(&cfg).unwrap();
    let mut pass = false;
    let mut parts = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let mid = (o.tau - 0.1).abs() < 1e-12;
        if mid {
            pass = o.gain_points() >= 1.0 && o.t_test.p_value < 0.05;
        }
        let converged = o.splits.iter().filter(|s| s.converged).count();
        let seeds: Vec<u64> = o.splits.iter().map(|s| s.split_seed).collect();
        let oracle = trace_rule_accuracy(&cfg, cfg.seed + i as u64, o.tau, &seeds);
        parts.push(format!(
            "tau={:.4}: SK {:.4} DSK {:.4} gain {:+.2}pp p={:.3} trace-rule {:.4} ({converged}/{} converged)",
            o.tau,
            o.mean_baseline,
            o.mean_dsk,
            o.gain_points(),
            o.t_test.p_value,
            oracle,
            o.splits.len()
        ));
    }
    (pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let small = eigenvalue_bias_experiment(40, 100, 100, 7).unwrap();
    let large = eigenvalue_bias_experiment(40, 1000, 100, 7).unwrap();
    let pass = small.mean_largest >= 55.0
        && small.mean_smallest <= 1.0
        && (42.0..=50.0).contains(&large.mean_largest);
    (
        pass,
        format!(
            "n=100: max {:.2} min {:.3}; n=1000: max {:.2} min {:.3}",
            small.mean_largest, small.mean_smallest, large.mean_largest, large.mean_smallest
        ),
    )
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` by sorting.
fn reference_simplex_projection(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().cloned().collect();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.map(|x| (x - shift).max(0.0))
}

/// Projection onto `{x ≥ 0, tᵀx = 0}` by bisection on the multiplier.
fn reference_balanced_projection(v: &DVector<f64>, t: &[f64]) -> DVector<f64> {
    let at = |mu: f64| DVector::from_fn(v.len(), |i, _| (v[i] - mu * t[i]).max(0.0));
    let balance = |mu: f64| at(mu).iter().zip(t).map(|(x, ti)| x * ti).sum::<f64>();
    let (mut lo, mut hi) = (-1.0, 1.0);
    while balance(lo) < 0.0 {
        lo *= 2.0;
    }
    while balance(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on `pᵀx − ½xᵀHx`.
fn reference_maximize(
    p: &DVector<f64>,
    h: &DMatrix<f64>,
    x0: DVector<f64>,
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> f64 {
    let lipschitz = h.clone().symmetric_eigenvalues().max().max(1e-12);
    let f = |x: &DVector<f64>| p.dot(x) - 0.5 * x.dot(&(h * x));
    let mut x = project(&x0);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    for _ in 0..50_000 {
        let grad = p - h * &y;
        let next = project(&(&y + grad / lipschitz));
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &x) * ((momentum - 1.0) / m_next);
        if f(&next) < f(&x) {
            y = next.clone();
            momentum = 1.0;
        } else {
            momentum = m_next;
        }
        x = next;
    }
    f(&x)
}

fn criterion_8() -> Outcome {
    let opts = QpOptions::default();
    let mut g = Gen::new(808);
    let mut worst_closed = 0.0f64;
    for _ in 0..100 {
        let a = g.uniform(0.5, 3.0);
        let b = g.uniform(0.5, 3.0);
        let c = g.uniform(-0.9, 0.9) * (a * b).sqrt();
        let k = DMatrix::from_row_slice(2, 2, &[a, c, c, b]);
        let gap = a + b - 2.0 * c;
        let w = solve_svm_dual(&k, &[1.0, -1.0], &opts).unwrap().w_norm_sq();
        let r = solve_enclosing_sphere(&k, &opts).unwrap().radius_sq;
        worst_closed = worst_closed.max((w - 4.0 / gap).abs() / (4.0 / gap));
        worst_closed = worst_closed.max((r - gap / 4.0).abs() / (gap / 4.0));
    }

    let mut worst_dual = 0.0f64;
    for _ in 0..100 {
        let d = 3;
        let samples: Vec<SpdMatrix> = (0..10).map(|_| g.spd(d, 0.8)).collect();
        let theta = [0.5, 1.0, 2.0][g.index(3)];
        let c = [0.1, 1.0, 10.0][g.index(3)];
        let k = ridged(SteinKernel { theta }.gram(&samples).unwrap().values(), c);
        let mut t: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { -1.0 }).collect();
        for i in (1..10).rev() {
            t.swap(i, g.index(i + 1));
        }

        let svm = solve_svm_dual(&k, &t, &opts).unwrap();
        let h = DMatrix::from_fn(10, 10, |i, j| t[i] * t[j] * k[(i, j)]);
        let ones = DVector::from_element(10, 1.0);
        let reference = reference_maximize(&ones, &h, DVector::zeros(10), |v| reference_balanced_projection(v, &t));
        worst_dual = worst_dual.max((svm.objective - reference).abs() / reference.abs());

        let sphere = solve_enclosing_sphere(&k, &opts).unwrap();
        let diag = k.diagonal();
        let start = DVector::from_element(10, 0.1);
        let reference = reference_maximize(&diag, &(&k * 2.0), start, reference_simplex_projection);
        worst_dual = worst_dual.max((sphere.radius_sq - reference).abs() / reference.abs());
    }
    (
        worst_closed <= 1e-6 && worst_dual <= 1e-6,
        format!("closed forms max rel err {worst_closed:.2e}; 10-sample duals max rel err {worst_dual:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let ds = make_wishart_task(5, 200, 0.1, 200, 7).unwrap();
    let idx = split(&ds, 0.5, 7000).unwrap();
    let train = ds.subset(&idx.train).unwrap();
    let grid = ThetaGrid::for_dim(5);
    let tuned = tune_reg_lambda(
        &train,
        AdjustmentMode::Power,
        StoppingRule::default(),
        &DEFAULT_REG_GRID,
        5,
        7,
        ClassifierSpec::Svm { c: 1.0 },
    )
    .unwrap();
    let mut pass = true;
    let mut parts = vec![format!("cv reg_lambda {}", tuned.best)];
    for criterion in [
        CriterionId::KernelAlignment(tuned.best),
        CriterionId::ClassSeparability,
        CriterionId::RadiusMargin,
    ] {
        let selection = select_theta(&train, criterion, &grid, &dsk::learn::DEFAULT_C_GRID).unwrap();
        let config = LearnConfig {
            c: selection.c,
            ..LearnConfig::new(criterion, AdjustmentMode::Power)
        };
        let out = learn_alpha(&train, selection.theta, &config).unwrap();
        let monotone = if criterion.maximize() {
            out.history.windows(2).all(|w| w[1] >= w[0])
        } else {
            out.history.windows(2).all(|w| w[1] <= w[0])
        };
        let ok = out.converged() && out.model.iterations <= 100 && monotone;
        pass &= ok;
        let stop = match out.stop {
            StopReason::RelativeChange => "rel-change",
            StopReason::LineSearch => "line-search",
            StopReason::MaxIterations => "max-iters",
        };
        parts.push(format!(
            "{criterion}: {} iters ({stop}){}",
            out.model.iterations,
            if monotone { "" } else { " NOT monotone" }
        ));
    }
    (pass, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let methods = [TimedMethod::Metric(MetricId::Airm), TimedMethod::Stein, TimedMethod::Dsk];
    let rows = gram_timing(&methods, 100, 100, 3, 10).unwrap();
    let (airm, sk, dsk) = (rows[0].seconds, rows[1].seconds, rows[2].seconds);
    (
        airm > sk && dsk <= 3.0 * sk,
        format!("AIRM {airm:.3}s, SK {sk:.3}s, DSK {dsk:.3}s (DSK/SK {:.2})", dsk / sk),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("DSK equals SK at identity", criterion_1),
        ("gradient fidelity", criterion_2),
        ("Mercer property", criterion_3),
        ("metric axioms", criterion_4),
        ("affine invariance", criterion_5),
        ("Wishart regime reproduction", criterion_6),
        ("eigenvalue bias", criterion_7),
        ("QP oracles", criterion_8),
        ("convergence discipline", criterion_9),
        ("timing order", criterion_10),
    ];
    let only: Option<usize> = std::env::var("DSK_ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if only.is_some_and(|o| o != number) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let message = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {message}"))
        });
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {number:>2} ({name}): {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed += 1;
        }
    }
    if only.is_none() {
        println!("INFO criterion 11 (real-image benchmark tables): not reproducible without the original datasets");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
