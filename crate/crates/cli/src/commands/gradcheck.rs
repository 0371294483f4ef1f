use std::path::PathBuf;

use anyhow::{bail, Result};
use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use dsk::criteria::gradient_check;
use dsk::data::stream_rng;
use dsk::{AdjustmentMode, AdjustmentParams, CriterionId};

use crate::io;

/// Largest dataset accepted; every component costs two criterion evaluations.
const MAX_SAMPLES: usize = 30;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    #[arg(long)]
    pub data: PathBuf,
    /// `all` or a comma-separated list of `ka[:lambda]`, `cs`, `rm`, `tm`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub criterion: Vec<String>,
    /// `power`, `coef` or `both`.
    #[arg(long, default_value = "both")]
    pub mode: String,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// `C` for the margin criteria.
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Seeds the random `α` around 1 at which gradients are compared.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<u8> {
    let ds = io::load_dataset(&args.data)?;
    if ds.len() > MAX_SAMPLES {
        bail!("gradcheck takes at most {MAX_SAMPLES} samples, got {}", ds.len());
    }
    if args.eps >= 1e-3 {
        eprintln!(
            "warning: eps = {:e} is coarse; central-difference truncation error grows as eps² and may exceed the tolerance",
            args.eps
        );
    }
    let criteria: Vec<CriterionId> = if args.criterion.iter().any(|c| c == "all") {
        vec![
            CriterionId::KernelAlignment(0.01),
            CriterionId::ClassSeparability,
            CriterionId::RadiusMargin,
            CriterionId::TraceMargin,
        ]
    } else {
        args.criterion
            .iter()
            .map(|c| io::parse_criterion(c).map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?
    };
    let modes = match args.mode.as_str() {
        "both" => vec![AdjustmentMode::Power, AdjustmentMode::Coefficient],
        other => vec![io::parse_mode(other).map_err(anyhow::Error::msg)?],
    };
    let mut rng = stream_rng(args.seed, 0);
    let alpha = DVector::from_fn(ds.dim(), |_, _| 1.0 + rng.random_range(-0.2..0.2));

    let mut failed = false;
    for &mode in &modes {
        let params = AdjustmentParams::new(mode, alpha.clone())?;
        for &criterion in &criteria {
            let c = criterion.uses_c().then_some(args.c);
            let tolerance = if criterion.uses_c() { 5e-3 } else { 1e-4 };
            let check = gradient_check(&ds, args.theta, &params, criterion, c, args.eps)?;
            let pass = check.passes(tolerance);
            failed |= !pass;
            println!(
                "{criterion} {mode}: max relative error {:.3e} (tolerance {tolerance:e}) {}",
                check.max_relative_error,
                if pass { "PASS" } else { "FAIL" }
            );
        }
    }
    Ok(if failed { 1 } else { 0 })
}
