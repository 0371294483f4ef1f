//! Datasets, file formats, synthetic generators and splits.

mod bias;
mod dataset;
mod descriptor;
mod format;
mod rng;
mod split;
mod wishart;

pub use bias::{eigenvalue_bias_experiment, BiasSummary};
pub use dataset::{Label, LabeledDataset};
pub use descriptor::{
    covariance_descriptor, covariance_of_features, extract_descriptors, patch_features, read_pgm, read_pgm_file, GrayImage,
    ImagePatchSpec, RidgeRepair, FEATURE_DIM,
};
pub use format::{read_dataset, read_spdb, read_spdset, write_spdb, write_spdset};
pub use rng::{stream_rng, NormalSampler};
pub use split::{loo_splits, split, stratified_folds, SplitIndices};
pub use wishart::{make_wishart_task, sample_wishart, WishartSpec};
