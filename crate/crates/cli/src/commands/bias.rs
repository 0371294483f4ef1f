use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use dsk::data::eigenvalue_bias_experiment;

use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// Samples drawn from `N(0, diag(1, …, dim))`.
    #[arg(long, default_value_t = 40)]
    pub dim: usize,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<u8> {
    let mut csv = String::from("dim,samples,trials,mean_largest,std_largest,mean_smallest,std_smallest\n");
    for &n in &args.samples {
        let s = eigenvalue_bias_experiment(args.dim, n, args.trials, args.seed)?;
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            s.dim, s.samples, s.trials, s.mean_largest, s.std_largest, s.mean_smallest, s.std_smallest
        )?;
    }
    io::emit(args.out.as_deref(), &csv)?;
    if let Some(out) = &args.out {
        io::write_config(out, "bias", &args)?;
    }
    Ok(0)
}
