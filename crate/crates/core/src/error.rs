use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the data, model, inference and estimation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate label `{0}` in alphabet")]
    DuplicateLabel(String),
    #[error("label `{0}` collides with the missing-value token")]
    MissingTokenCollision(String),
    #[error("alphabet must contain at least one label")]
    EmptyAlphabet,
    #[error("unknown token `{token}` in channel `{channel}` at row {row}, column {col}")]
    UnknownToken {
        channel: String,
        row: usize,
        col: usize,
        token: String,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing covariate: {0}")]
    MissingCovariate(String),
    #[error("covariate design is rank deficient")]
    RankDeficientDesign,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} of {matrix} sums to {sum}")]
    RowSumError { matrix: String, row: usize, sum: f64 },
    #[error("negative or non-finite probability {value} in {matrix} at ({row}, {col})")]
    NegativeProbability {
        matrix: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("the data must be in a single-channel format")]
    MultichannelNotAllowed,
    #[error("first column of gamma (reference cluster) must be zero")]
    GammaReferenceNotZero,
    #[error("trimming removed every entry of row {row} of {matrix}")]
    RowAnnihilated { matrix: String, row: usize },

    #[error("model and data alphabets differ: {0}")]
    AlphabetMismatch(String),
    #[error("numerical underflow in scaled forward recursion (subject {subject}, time {time}); retry in log space")]
    NumericalUnderflow { subject: usize, time: usize },
    #[error("subject {subject} has zero probability under the model")]
    ImpossibleData { subject: usize },
    #[error("effective data size is zero")]
    DegenerateData,

    #[error("log-likelihood became non-finite during estimation")]
    NonFiniteLikelihood,
    #[error("hessian with respect to covariate coefficients is not invertible")]
    NonInvertibleHessian,
    #[error("invalid control setting: {0}")]
    InvalidControl(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name of the variant, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::MissingTokenCollision(_) => "MissingTokenCollision",
            Error::EmptyAlphabet => "EmptyAlphabet",
            Error::UnknownToken { .. } => "UnknownToken",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::MissingCovariate(_) => "MissingCovariate",
            Error::RankDeficientDesign => "RankDeficientDesign",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::RowSumError { .. } => "RowSumError",
            Error::NegativeProbability { .. } => "NegativeProbability",
            Error::MultichannelNotAllowed => "MultichannelNotAllowed",
            Error::GammaReferenceNotZero => "GammaReferenceNotZero",
            Error::RowAnnihilated { .. } => "RowAnnihilated",
            Error::AlphabetMismatch(_) => "AlphabetMismatch",
            Error::NumericalUnderflow { .. } => "NumericalUnderflow",
            Error::ImpossibleData { .. } => "ImpossibleData",
            Error::DegenerateData => "DegenerateData",
            Error::NonFiniteLikelihood => "NonFiniteLikelihood",
            Error::NonInvertibleHessian => "NonInvertibleHessian",
            Error::InvalidControl(_) => "InvalidControl",
            Error::EmptyDataset => "EmptyDataset",
            Error::ModelFormat(_) => "ModelFormat",
            Error::Manifest(_) => "Manifest",
            Error::Io { .. } => "Io",
            Error::Csv { .. } => "Csv",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
