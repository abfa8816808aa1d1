use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mesh needs at least one element per axis, got {nx} x {ny}")]
    ZeroElements { nx: usize, ny: usize },
    #[error("mesh side lengths must be positive and finite, got {lx} x {ly}")]
    BadExtent { lx: f64, ly: f64 },

    #[error("Robin coefficient must be positive, got {value} at x = {x}")]
    NonPositiveBeta { x: f64, value: f64 },
    #[error("linear solve failed: zero or tiny pivot at row {row}")]
    SingularMatrix { row: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("non-finite value produced by the solver")]
    NonFinite,

    #[error("point {x} lies outside [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("frequency {k} exceeds truncation order {truncation}")]
    FrequencyOutOfRange { k: i64, truncation: usize },
    #[error("rescaling needs N >= 2, got {0}")]
    RescaleSampleCount(f64),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid chain configuration: {0}")]
    InvalidChainConfig(String),
    #[error("{failed} of {proposals} proposals failed the forward solve")]
    TooManyFailures { failed: usize, proposals: usize },

    #[error("empty chain record")]
    EmptyRecord,
    #[error("series too short for autocorrelation analysis: {0} < 10")]
    ShortSeries(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
