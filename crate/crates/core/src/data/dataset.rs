use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

/// Class label in `1..=M`.
pub type Label = usize;

/// Ordered SPD samples with class labels `1..=M`, every class present.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<SpdMatrix>,
    labels: Vec<Label>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(samples: Vec<SpdMatrix>, labels: Vec<Label>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: labels.len(),
            });
        }
        if samples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let dim = samples[0].dim();
        if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        if labels.contains(&0) {
            return Err(Error::invalid("class labels start at 1"));
        }
        let num_classes = *labels.iter().max().expect("nonempty");
        let mut seen = vec![false; num_classes + 1];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = (1..=num_classes).find(|&c| !seen[c]) {
            return Err(Error::InsufficientClassSamples {
                label: missing,
                count: 0,
                required: 1,
            });
        }
        Ok(Self {
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    /// `M`, the number of classes.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[SpdMatrix] {
        &self.samples
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Indices of the samples in class `label`, in dataset order.
    pub fn class_indices(&self, label: Label) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// `n_c` for `c = 1..=M` (index 0 holds class 1).
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(samples, labels)
    }

    /// SHA-256 over labels and the bit patterns of all entries, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.dim() as u64).to_le_bytes());
        for (s, &l) in self.samples.iter().zip(&self.labels) {
            hasher.update((l as u64).to_le_bytes());
            for v in s.entries().iter() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
