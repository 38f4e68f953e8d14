use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset too small to split (n = {0})")]
    TooSmallToSplit(usize),

    #[error("arm too small: {arm} arm has {count} samples, need at least {needed}")]
    ArmTooSmall {
        arm: &'static str,
        count: usize,
        needed: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot fit arm: {0}")]
    CannotFitArm(&'static str),

    #[error("singular design")]
    SingularDesign,

    #[error("kernel not positive definite")]
    KernelNotPositiveDefinite,

    #[error(
        "alpha too strict for calibration size ({n_calib} calibration rows at coverage {coverage})"
    )]
    AlphaTooStrict { n_calib: usize, coverage: f64 },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("treatment value {value} at row {row} is not 0 or 1")]
    InvalidTreatment { row: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
