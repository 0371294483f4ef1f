pub mod bench;
pub mod bias;
pub mod compare;
pub mod eval;
pub mod extract;
pub mod gradcheck;
pub mod synth;
pub mod train;
pub mod wishart;

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;

use dsk::experiment::ClassifierSpec;
use dsk::KnnConfig;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Knn,
    Svm,
}

impl Classifier {
    pub fn spec(self, k: usize, c: f64) -> Result<ClassifierSpec> {
        Ok(match self {
            Classifier::Knn => ClassifierSpec::Knn(KnnConfig::new(k)?),
            Classifier::Svm => ClassifierSpec::Svm { c },
        })
    }
}

/// Serializes a field through its `Display` form.
pub fn display<T: std::fmt::Display, S: serde::Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}
