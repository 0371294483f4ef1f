use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dsk::classify::ovo_predict_batch;
use dsk::data::split;
use dsk::experiment::{classify_with_kernel, ClassifierSpec};
use dsk::{evaluate, paired_t_test, DskModel, Evaluation, LabeledDataset};

use super::Classifier;
use crate::io;

#[derive(clap::Args, Debug, Serialize)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    /// Training set for the classifier (single evaluation).
    #[arg(long, requires = "test", conflicts_with = "data")]
    pub train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// Dataset split repeatedly by `--splits`.
    #[arg(long, requires = "splits")]
    pub data: Option<PathBuf>,
    /// Comma-separated split seeds.
    #[arg(long, value_delimiter = ',')]
    pub splits: Vec<u64>,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Defaults to `svm` when the model stores one, `knn` otherwise.
    #[arg(long, value_enum)]
    pub classifier: Option<Classifier>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// SVM `C`; defaults to the model's.
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// `sk` (same θ, α = 1) or a model file; compared by paired t-test.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    split_seed: Option<u64>,
    test_size: usize,
    accuracy: f64,
    /// `nan` for classes absent from the test set.
    per_class_accuracy: Vec<f64>,
    /// Rows are true classes, columns predictions.
    confusion: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct BaselineReport {
    name: String,
    accuracies: Vec<f64>,
    mean_accuracy: f64,
    std_accuracy: f64,
    mean_difference: f64,
    t: f64,
    dof: usize,
    p_value: f64,
}

#[derive(Serialize)]
struct Report {
    model: String,
    classifier: String,
    mean_accuracy: f64,
    std_accuracy: f64,
    runs: Vec<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<BaselineReport>,
}

fn run_report(e: Evaluation, split_seed: Option<u64>) -> RunReport {
    RunReport {
        split_seed,
        test_size: e.confusion.iter().flatten().sum(),
        accuracy: e.accuracy,
        per_class_accuracy: e.per_class.iter().map(|a| a.unwrap_or(f64::NAN)).collect(),
        confusion: e.confusion,
    }
}

fn read_model(path: &Path) -> Result<DskModel> {
    let file = std::fs::File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    DskModel::read(std::io::BufReader::new(file)).with_context(|| format!("reading model {}", path.display()))
}

/// Labels `test` with the model's kernel, reusing its stored SVM when it was trained on `train`.
fn predict(model: &DskModel, train: &LabeledDataset, test: &LabeledDataset, spec: ClassifierSpec, reuse: bool) -> Result<Vec<usize>> {
    let kernel = model.kernel()?;
    if let (ClassifierSpec::Svm { .. }, Some(svm), true) = (spec, &model.svm, reuse) {
        if model.fingerprint == train.fingerprint() {
            return Ok(ovo_predict_batch(svm, train, &kernel, test.samples())?);
        }
    }
    Ok(classify_with_kernel(train, test.samples(), &kernel, spec)?)
}

pub fn run(args: Args) -> Result<u8> {
    let model = read_model(&args.model)?;
    let classifier = args
        .classifier
        .unwrap_or(if model.svm.is_some() { Classifier::Svm } else { Classifier::Knn });
    let c = args
        .c
        .or(model.svm.as_ref().map(|s| s.c))
        .or(model.c)
        .unwrap_or(1.0);
    let spec = classifier.spec(args.k, c)?;
    let reuse = args.c.is_none();
    let baseline = match args.baseline.as_deref() {
        None => None,
        Some("sk") => Some(("sk".to_string(), model.baseline())),
        Some(path) => Some((path.to_string(), read_model(Path::new(path))?)),
    };

    let mut pairs: Vec<(Option<u64>, LabeledDataset, LabeledDataset)> = Vec::new();
    match (&args.train, &args.test, &args.data) {
        (Some(train), Some(test), _) => pairs.push((None, io::load_dataset(train)?, io::load_dataset(test)?)),
        (_, _, Some(data)) => {
            let ds = io::load_dataset(data)?;
            for &seed in &args.splits {
                let idx = split(&ds, args.train_fraction, seed)?;
                pairs.push((Some(seed), ds.subset(&idx.train)?, ds.subset(&idx.test)?));
            }
        }
        _ => bail!("give either --train and --test, or --data with --splits"),
    }

    let mut runs = Vec::new();
    let mut base_acc = Vec::new();
    for (seed, train, test) in &pairs {
        for set in [train, test] {
            if set.dim() != model.params.dim() {
                bail!("model has dimension {}, dataset has {}", model.params.dim(), set.dim());
            }
        }
        let m = train.num_classes().max(test.num_classes());
        let pred = predict(&model, train, test, spec, reuse)?;
        runs.push(run_report(evaluate(&pred, test.labels(), m)?, *seed));
        if let Some((_, b)) = &baseline {
            let pred = predict(b, train, test, spec, false)?;
            base_acc.push(evaluate(&pred, test.labels(), m)?.accuracy);
        }
    }
    let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, std_accuracy) = io::mean_std(&acc);
    let baseline = match baseline {
        Some((name, _)) if acc.len() >= 2 => {
            let t = paired_t_test(&acc, &base_acc)?;
            let (mean, std) = io::mean_std(&base_acc);
            Some(BaselineReport {
                name,
                accuracies: base_acc,
                mean_accuracy: mean,
                std_accuracy: std,
                mean_difference: t.mean_difference,
                t: t.t,
                dof: t.dof,
                p_value: t.p_value,
            })
        }
        Some(_) => bail!("a baseline comparison needs at least two splits"),
        None => None,
    };
    let report = Report {
        model: args.model.display().to_string(),
        classifier: match spec {
            ClassifierSpec::Knn(cfg) => format!("knn:{}", cfg.k()),
            ClassifierSpec::Svm { c } => format!("svm:{c}"),
        },
        mean_accuracy,
        std_accuracy,
        runs,
        baseline,
    };
    let text = toml::to_string(&report).context("serializing the report")?;
    io::emit(args.report.as_deref(), &text)?;
    if let Some(path) = &args.report {
        io::write_config(path, "eval", &args)?;
    }
    Ok(0)
}
