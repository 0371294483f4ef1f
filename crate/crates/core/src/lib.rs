//! Discriminative Stein kernels for SPD matrices.
//!
//! The Stein kernel `exp(−θ S(X, Y))` compares covariance-like matrices
//! through the symmetric S-divergence. The discriminative variant adjusts
//! each input's eigenvalues (`λ ↦ λ^α` or `λ ↦ αλ`) with weights learned for
//! a classification task, by kernel alignment, class separability, or the
//! radius-margin bound of an SVM.

pub mod classify;
pub mod criteria;
pub mod data;
pub mod dsk;
pub mod error;
pub mod experiment;
pub mod gram;
pub mod learn;
pub mod model;
pub mod qp;
pub mod spd;

pub use classify::{evaluate, knn_predict, ovo_predict, ovo_train, paired_t_test, Evaluation, KnnConfig, OvoSvmModel};
pub use criteria::{CriterionId, IdealKernel, Objective, SphereSolution, SvmDual};
pub use data::{Label, LabeledDataset};
pub use dsk::{adjust, adjusted_s_divergence, dsk_gradient, dsk_kernel, AdjustmentMode, AdjustmentParams};
pub use error::{Error, Result};
pub use gram::{dsk_gram_with_gradient, distance_matrix, DskKernel, GramMatrix, Kernel, KernelId, MetricKernel, SteinKernel};
pub use learn::{fit, learn_alpha, select_theta, LearnConfig, LearnOutcome, StoppingRule, ThetaGrid};
pub use model::DskModel;
pub use spd::{make_spd, metric_distance, metric_kernel, s_divergence, stein_kernel, MetricId, SpdMatrix};
