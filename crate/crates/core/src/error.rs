use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("MPC delay {delay_s:.3e} s outside the delay window [0, {window_s:.3e}) s")]
    OutOfWindow { delay_s: f64, window_s: f64 },

    #[error("inconsistent MPC geometry: {0}")]
    InconsistentGeometry(String),

    #[error("ill-conditioned calibration: |Y_cal| below floor at in-band bin {bin}")]
    IllConditionedCalibration { bin: usize },

    #[error("no multipath components")]
    NoPaths,

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("model not identifiable: {0}")]
    Identifiability(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("zero-energy channel at {0}")]
    Normalization(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, err: impl FnOnce() -> Error) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(err())
    }
}
