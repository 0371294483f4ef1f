use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::Serialize;

use dsk::data::split;
use dsk::experiment::classify_with_metric;
use dsk::{evaluate, MetricId};

use super::Classifier;
use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    #[arg(long)]
    pub data: PathBuf,
    /// `all` or a comma-separated list, e.g. `airm,log-euclidean,power-euclidean:0.5,stein`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub metrics: Vec<String>,
    #[arg(long, value_enum, default_value = "knn")]
    pub classifier: Classifier,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Bandwidth of the Gaussian kernels `exp(−θ d²)`.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Comma-separated split seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub splits: Vec<u64>,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<u8> {
    let everything = args.metrics.iter().any(|m| m == "all");
    let mut metrics: Vec<MetricId> = if everything {
        MetricId::all()
    } else {
        args.metrics
            .iter()
            .map(|m| io::parse_metric(m).map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?
    };
    if args.classifier == Classifier::Svm {
        if !everything && metrics.contains(&MetricId::Airm) {
            bail!("airm has no positive definite kernel; use --classifier knn");
        }
        if metrics.contains(&MetricId::Airm) {
            eprintln!("note: skipping airm, which cannot drive an SVM");
        }
        metrics.retain(|m| *m != MetricId::Airm);
    }
    let spec = args.classifier.spec(args.k, args.c)?;
    let ds = io::load_dataset(&args.data)?;
    let splits: Vec<_> = args
        .splits
        .iter()
        .map(|&s| {
            let idx = split(&ds, args.train_fraction, s)?;
            Ok((ds.subset(&idx.train)?, ds.subset(&idx.test)?))
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("metric,classifier,splits,mean_accuracy,std_accuracy\n");
    for metric in metrics {
        let mut acc = Vec::with_capacity(splits.len());
        for (train, test) in &splits {
            let pred = classify_with_metric(train, test.samples(), metric, args.theta, spec)?;
            acc.push(evaluate(&pred, test.labels(), ds.num_classes())?.accuracy);
        }
        let (mean, std) = io::mean_std(&acc);
        let name = match args.classifier {
            Classifier::Knn => format!("knn:{}", args.k),
            Classifier::Svm => format!("svm:{}", args.c),
        };
        writeln!(csv, "{metric},{name},{},{mean:.6},{std:.6}", acc.len())?;
    }
    io::emit(args.out.as_deref(), &csv)?;
    if let Some(out) = &args.out {
        io::write_config(out, "compare", &args)?;
    }
    Ok(0)
}
