use std::path::PathBuf;

use thiserror::Error;

use crate::sandbox::TrainRecord;

/// Errors raised anywhere in the toolbox.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("symmetric eigensolver did not converge")]
    EigFailure,

    #[error("matrix is not positive semidefinite (min eigenvalue {min:e}, max eigenvalue {max:e})")]
    NotPsd { min: f64, max: f64 },

    #[error("diagonal entry {index} is {value}, expected 1")]
    BadDiagonal { index: usize, value: f64 },

    #[error("feature dimension {0} has zero variance across the batch")]
    ZeroVariance(usize),

    #[error("column {0} has zero norm")]
    ZeroColumn(usize),

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix logarithm undefined: eigenvalue {eigenvalue:e} below threshold")]
    SingularLog { eigenvalue: f64 },

    #[error("second KL argument is not strictly positive definite (eigenvalue {eigenvalue:e})")]
    SingularSecondArgument { eigenvalue: f64 },

    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),

    #[error("mu must be positive, got {0}")]
    BadMu(f64),

    #[error("loss weight must be nonnegative, got {0}")]
    BadLambda(f64),

    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),

    #[error("mask ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),

    #[error("vector length {len} is not divisible by patch count {patches}")]
    IndivisibleLength { len: usize, patches: usize },

    #[error("matrix is all zero")]
    AllZeroMatrix,

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("columns are not unit norm (column {index} has norm {norm})")]
    NotUnitColumns { index: usize, norm: f64 },

    #[error("class {0} is absent from the training labels")]
    DegenerateLabels(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("no checkpoints found in {0}")]
    EmptyDirectory(PathBuf),

    #[error("checkpoints have mixed shapes: {0}")]
    MixedShapes(String),

    #[error("loss became non-finite at step {step}")]
    DivergedLoss {
        step: usize,
        /// Records collected up to and including the last finite step.
        partial: Vec<TrainRecord>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
