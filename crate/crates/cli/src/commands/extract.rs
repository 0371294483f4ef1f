use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use dsk::data::{extract_descriptors, read_pgm_file, write_spdb, write_spdset, ImagePatchSpec, RidgeRepair};
use dsk::LabeledDataset;

use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    /// `LABEL=PATH` of a binary PGM image; repeat for more images.
    #[arg(long = "image", required = true, value_name = "LABEL=PATH")]
    pub images: Vec<String>,
    /// Side of the square patch in pixels.
    #[arg(long, default_value_t = 32)]
    pub patch: usize,
    /// Patches per image side.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Fraction of patch pixels used for each covariance.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Add a small ridge to covariances that are not positive definite.
    #[arg(long)]
    pub ridge: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_image(spec: &str) -> Result<(usize, PathBuf)> {
    let (label, path) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("expected LABEL=PATH, got '{spec}'"))?;
    let label: usize = label.parse().with_context(|| format!("bad label in '{spec}'"))?;
    if label == 0 {
        return Err(anyhow!("labels start at 1, got '{spec}'"));
    }
    Ok((label, PathBuf::from(path)))
}

pub fn run(args: Args) -> Result<u8> {
    let spec = ImagePatchSpec {
        patch: args.patch,
        grid: args.grid,
        fraction: args.fraction,
        ridge: if args.ridge { RidgeRepair::On } else { RidgeRepair::Off },
        seed: args.seed,
    };
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for entry in &args.images {
        let (label, path) = parse_image(entry)?;
        let image = read_pgm_file(&path).with_context(|| format!("reading {}", path.display()))?;
        let descriptors =
            extract_descriptors(&image, &spec).with_context(|| format!("extracting from {}", path.display()))?;
        labels.extend(std::iter::repeat_n(label, descriptors.len()));
        samples.extend(descriptors);
    }
    let ds = LabeledDataset::new(samples, labels)?;
    io::write_atomic(&args.out, |w| {
        if args.binary {
            write_spdb(&ds, w)?;
        } else {
            write_spdset(&ds, w)?;
        }
        Ok(())
    })?;
    io::write_config(&args.out, "extract", &args)?;
    println!("wrote {} descriptors from {} images to {}", ds.len(), args.images.len(), args.out.display());
    Ok(0)
}
