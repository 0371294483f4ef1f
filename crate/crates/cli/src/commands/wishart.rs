use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use dsk::experiment::{wishart_study, WishartStudyConfig};
use dsk::learn::DEFAULT_C_GRID;
use dsk::{AdjustmentMode, CriterionId, StoppingRule};

use super::display;
use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub dof: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Comma-separated class-2 scale offsets.
    #[arg(long, value_delimiter = ',', default_value = "0.0031622776601683794,0.1,1")]
    pub taus: Vec<f64>,
    /// Random train/test splits per task.
    #[arg(long, default_value_t = 20)]
    pub splits: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long, value_parser = io::parse_criterion, default_value = "rm")]
    #[serde(serialize_with = "display")]
    pub criterion: CriterionId,
    #[arg(long, value_parser = io::parse_mode, default_value = "power")]
    #[serde(serialize_with = "display")]
    pub mode: AdjustmentMode,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Per-task summary CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-split CSV.
    #[arg(long)]
    pub details: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<u8> {
    let cfg = WishartStudyConfig {
        dim: args.dim,
        dof: args.dof,
        per_class: args.per_class,
        taus: args.taus.clone(),
        splits: args.splits,
        train_fraction: args.train_fraction,
        criterion: args.criterion,
        mode: args.mode,
        stopping: StoppingRule::new(args.max_iters, args.tol)?,
        c_grid: DEFAULT_C_GRID.to_vec(),
        seed: args.seed,
    };
    let outcomes = wishart_study(&cfg)?;
    let mut summary = String::from("tau,splits,mean_sk,mean_dsk,gain_points,t,p_value,converged\n");
    let mut details = String::from(
        "tau,split_seed,theta,baseline_c,dsk_c,iterations,converged,sk_accuracy,dsk_accuracy,alpha\n",
    );
    for o in &outcomes {
        let converged = o.splits.iter().filter(|s| s.converged).count();
        writeln!(
            summary,
            "{:e},{},{:.6},{:.6},{:.4},{:.4},{:.6},{converged}",
            o.tau,
            o.splits.len(),
            o.mean_baseline,
            o.mean_dsk,
            o.gain_points(),
            o.t_test.t,
            o.t_test.p_value
        )?;
        for s in &o.splits {
            let alpha: Vec<String> = s.alpha.iter().map(|a| format!("{a:.6}")).collect();
            writeln!(
                details,
                "{:e},{},{},{},{},{},{},{:.6},{:.6},{}",
                o.tau,
                s.split_seed,
                s.theta,
                s.baseline_c,
                s.dsk_c,
                s.iterations,
                s.converged,
                s.baseline_accuracy,
                s.dsk_accuracy,
                alpha.join(" ")
            )?;
        }
    }
    io::emit(args.out.as_deref(), &summary)?;
    if let Some(out) = &args.out {
        io::write_config(out, "wishart", &args)?;
    }
    if let Some(path) = &args.details {
        io::write_text(path, &details)?;
    }
    Ok(0)
}
