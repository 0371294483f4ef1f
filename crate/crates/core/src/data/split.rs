//! Stratified train/test splits, leave-one-out folds and k-fold partitions.

use rand::seq::SliceRandom;

use super::dataset::LabeledDataset;
use super::rng::stream_rng;
use crate::error::{Error, Result};

/// Indices into a dataset, train and test disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split with `round(fraction·n_c)` training samples per class,
/// clamped to `[1, n_c − 1]`. Indices come back sorted.
pub fn split(dataset: &LabeledDataset, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 1..=dataset.num_classes() {
        let mut members = dataset.class_indices(label);
        if members.len() < 2 {
            return Err(Error::InsufficientClassSamples {
                label,
                count: members.len(),
                required: 2,
            });
        }
        members.shuffle(&mut rng);
        let n_c = members.len();
        let n_train = ((fraction * n_c as f64).round() as usize).clamp(1, n_c - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// One fold per sample, each holding out exactly that sample.
pub fn loo_splits(dataset: &LabeledDataset) -> Vec<SplitIndices> {
    let n = dataset.len();
    (0..n)
        .map(|i| SplitIndices {
            train: (0..n).filter(|&j| j != i).collect(),
            test: vec![i],
        })
        .collect()
}

/// Partition `indices` into `k` folds, stratified by label: each class is
/// shuffled and dealt round-robin, continuing where the previous class ended.
pub fn stratified_folds(labels: &[usize], indices: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if indices.len() < k {
        return Err(Error::invalid(format!("{} samples cannot fill {k} folds", indices.len())));
    }
    let mut rng = stream_rng(seed, 1);
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &i in indices {
        by_class.entry(labels[i]).or_default().push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[slot].push(i);
            slot = (slot + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::SpdMatrix;

    fn dataset(counts: &[usize]) -> LabeledDataset {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(SpdMatrix::from_diagonal(&[1.0 + i as f64]).unwrap());
                labels.push(c + 1);
            }
        }
        LabeledDataset::new(samples, labels).unwrap()
    }

    #[test]
    fn half_split_of_four_and_four() {
        let ds = dataset(&[4, 4]);
        let s = split(&ds, 0.5, 3).unwrap();
        assert_eq!(s.train.len(), 4);
        assert_eq!(s.test.len(), 4);
        for label in [1, 2] {
            assert_eq!(s.train.iter().filter(|&&i| ds.labels()[i] == label).count(), 2);
        }
    }

    #[test]
    fn singleton_class_is_rejected() {
        let ds = dataset(&[3, 1]);
        assert!(matches!(
            split(&ds, 0.5, 0),
            Err(Error::InsufficientClassSamples { label: 2, count: 1, .. })
        ));
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let ds = dataset(&[20, 20]);
        let all: Vec<SplitIndices> = (0..20).map(|s| split(&ds, 0.5, s).unwrap()).collect();
        for (s, first) in all.iter().enumerate() {
            assert_eq!(first, &split(&ds, 0.5, s as u64).unwrap());
            for other in &all[s + 1..] {
                assert_ne!(first, other);
            }
        }
    }

    #[test]
    fn loo_covers_every_index_once() {
        let ds = dataset(&[3, 2]);
        let folds = loo_splits(&ds);
        assert_eq!(folds.len(), 5);
        let mut held: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        held.sort_unstable();
        assert_eq!(held, vec![0, 1, 2, 3, 4]);
        assert!(folds.iter().all(|f| f.train.len() == 4 && !f.train.contains(&f.test[0])));
    }

    #[test]
    fn folds_partition_the_indices() {
        let labels = vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2];
        let idx: Vec<usize> = (0..labels.len()).collect();
        let folds = stratified_folds(&labels, &idx, 3, 9).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
        for f in &folds {
            assert!(f.len() >= 3 && f.len() <= 4);
            assert!(f.iter().any(|&i| labels[i] == 1));
            assert!(f.iter().any(|&i| labels[i] == 2));
        }
    }
}
