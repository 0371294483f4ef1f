use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::Serialize;

use dsk::experiment::tune_reg_lambda;
use dsk::learn::{DEFAULT_C_GRID, DEFAULT_REG_GRID};
use dsk::{fit, ovo_train, AdjustmentMode, CriterionId, LearnConfig, StoppingRule, ThetaGrid};

use super::{display, Classifier};
use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Training set (`spdset` or `spdb`).
    #[arg(long)]
    pub data: PathBuf,
    /// `ka[:lambda]`, `cs`, `rm` or `tm`.
    #[arg(long, value_parser = io::parse_criterion, default_value = "ka")]
    #[serde(serialize_with = "display")]
    pub criterion: CriterionId,
    /// Alignment regularizer; overrides `ka:lambda` and cross-validation.
    #[arg(long)]
    pub reg_lambda: Option<f64>,
    /// `power` or `coef`.
    #[arg(long, value_parser = io::parse_mode, default_value = "power")]
    #[serde(serialize_with = "display")]
    pub mode: AdjustmentMode,
    #[arg(long, value_enum, default_value = "knn")]
    pub classifier: Classifier,
    /// Neighbours for k-NN (odd).
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// SVM `C` for `ka`/`cs`; `rm`/`tm` learn their own.
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Folds for choosing the alignment regularizer; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_model: PathBuf,
}

pub fn run(mut args: Args) -> Result<u8> {
    if args.criterion.uses_c() && args.classifier != Classifier::Svm {
        bail!("{} is a bound on SVM error and pairs only with --classifier svm", args.criterion);
    }
    let ds = io::load_dataset(&args.data)?;
    let stopping = StoppingRule::new(args.max_iters, args.tol)?;
    let classifier = args.classifier.spec(args.k, args.c)?;

    if let CriterionId::KernelAlignment(from_flag) = args.criterion {
        let lambda = match (args.reg_lambda, args.cv_folds) {
            (Some(l), _) => l,
            (None, 0 | 1) => from_flag,
            (None, folds) => {
                let cv = tune_reg_lambda(&ds, args.mode, stopping, &DEFAULT_REG_GRID, folds, args.seed, classifier)?;
                for (l, s) in DEFAULT_REG_GRID.iter().zip(&cv.scores) {
                    println!("cv reg_lambda {l:e}: accuracy {s:.4}");
                }
                cv.best
            }
        };
        args.criterion = CriterionId::KernelAlignment(lambda);
        args.reg_lambda = Some(lambda);
    }

    let mut config = LearnConfig::new(args.criterion, args.mode);
    config.stopping = stopping;
    let (selection, outcome) = fit(&ds, &config, &ThetaGrid::for_dim(ds.dim()), &DEFAULT_C_GRID)?;
    let converged = outcome.converged();
    let mut model = outcome.model;
    if args.classifier == Classifier::Svm {
        let c = model.c.unwrap_or(args.c);
        model.svm = Some(ovo_train(&ds, &model.kernel()?, c)?);
    }

    let mut text = Vec::new();
    model.write(&mut text)?;
    io::write_atomic(&args.out_model, |w| Ok(w.write_all(&text)?))?;
    io::write_config(&args.out_model, "train", &args)?;

    println!("theta {}", selection.theta);
    if let Some(c) = model.c {
        println!("C {c}");
    }
    let alpha: Vec<String> = model.params.alpha().iter().map(|a| format!("{a:.6}")).collect();
    println!("alpha {}", alpha.join(" "));
    println!("objective {:.8e}", model.objective);
    println!("iterations {}", model.iterations);
    println!("stop {:?}", outcome.stop);
    if !converged {
        eprintln!(
            "error: no convergence within {} iterations; model written to {}",
            args.max_iters,
            args.out_model.display()
        );
        return Ok(3);
    }
    Ok(0)
}
