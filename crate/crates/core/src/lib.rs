//! Robust recursive partitioning (R2P) for subgroup discovery.
//!
//! The crate builds interpretable partitions of a covariate space whose
//! leaves carry split-conformal intervals with per-subgroup coverage. It
//! works in a plain regression setting and in a two-arm treatment-effect
//! setting, and ships the causal-tree baselines, synthetic generators and
//! evaluation metrics needed to benchmark the method.
//!
//! Module map:
//!
//! - [`data`]: dataset containers and seeded splitting.
//! - [`estimators`]: kNN / ridge / Gaussian-process outcome models and the
//!   two-arm T-learner.
//! - [`conformal`]: residual quantiles and interval construction.
//! - [`partition`]: the confident-homogeneity split search and tree builder.
//! - [`baselines`]: adaptive, honest and conformal causal trees.
//! - [`datasets`]: synthetic generators and the CSV loader.
//! - [`metrics`]: subgroup heterogeneity, coverage, overlap and PEHE.
//! - [`dump`]: JSON tree documents shared by every tree type.

pub mod baselines;
pub mod conformal;
pub mod data;
pub mod datasets;
pub mod dump;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod partition;

pub use conformal::{ArmCalibrations, ConformalCalibration, Interval};
pub use data::{DataSplit, GroundTruth, HteDataset, Matrix, RegressionDataset};
pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, IteEstimator, OutcomeEstimator};
pub use partition::{GroupPrediction, PartitionConfig, PartitionTree, SplitRule, SplitSide};
