use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("cylinder offset R = {0} outside [0, 1/2]")]
    OffsetOutOfRange(f64),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("mollifier scale T = {t} below grid resolution (need T >= {min})")]
    ScaleBelowResolution { t: f64, min: f64 },

    #[error("insufficient support margin: need {need}, have {have}")]
    SupportMargin { need: f64, have: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value at t={t}, node {node}: {context}")]
    NonFinite { t: f64, node: usize, context: String },

    #[error("value {0} below the range of theta")]
    BelowThetaRange(f64),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    ConfigValidation(Vec<String>),

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}
