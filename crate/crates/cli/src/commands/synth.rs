use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use dsk::data::{make_wishart_task, write_spdb, write_spdset};

use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    /// Wishart degrees of freedom (integer, at least `dim`).
    #[arg(long, default_value_t = 200)]
    pub dof: usize,
    /// Class 2 has scale `(1 + tau)·I`; must be positive.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Write the packed `spdb` format instead of text.
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<u8> {
    let ds = make_wishart_task(args.dim, args.dof, args.tau, args.per_class, args.seed)?;
    io::write_atomic(&args.out, |w| {
        if args.binary {
            write_spdb(&ds, w)?;
        } else {
            write_spdset(&ds, w)?;
        }
        Ok(())
    })?;
    io::write_config(&args.out, "synth", &args)?;
    println!("wrote {} samples (d = {}, {} classes) to {}", ds.len(), ds.dim(), ds.num_classes(), args.out.display());
    Ok(0)
}
