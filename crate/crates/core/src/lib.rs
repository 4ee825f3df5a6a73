//! Metric-space magnitude and weighting vectors for finite point clouds.
//!
//! The weighting vector `w = zeta^{-1} 1` of a point cloud, where
//! `zeta_ij = exp(-t d(x_i, x_j))`, is large near the boundary of the cloud and
//! small in its interior. This crate computes it directly ([`weighting`]),
//! maintains it incrementally through Schur complements ([`schur`]), and builds
//! a classifier, an active-learning query strategy and an outlier detector on
//! top of it.

pub mod active;
pub mod cholesky;
pub mod classify;
pub mod data;
pub mod error;
pub mod harness;
pub mod metric;
pub mod outlier;
pub mod schur;
pub mod stats;
pub mod weighting;

pub use active::{ALConfig, ALSession, KernelRidgeModel, Strategy};
pub use cholesky::Cholesky;
pub use classify::{fit, ClassifierConfig, FittedClassifier, Prediction};
pub use data::LabeledDataset;
pub use error::{Error, Result};
pub use harness::ExperimentReport;
pub use metric::{distance_matrix, similarity_matrix, Metric, PointCloud, SimilarityMatrix};
pub use outlier::{detect_outliers, OutlierOptions, OutlierReport};
pub use schur::{
    add_point, disjoint_gluing, extend_weighting, rho, schur_complement, union_weighting, BlockPartition, Corner,
    RhoMatrix,
};
pub use weighting::{magnitude_function, weighting, MagnitudeSample, PointScore, WeightingState};
