use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("first coordinate must be ±1, got {0}")]
    Normalization(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {required} observations, got {got}")]
    TooFewObservations { required: usize, got: usize },

    #[error("observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: &'static str },

    #[error(
        "empirical covariance of the continuous covariates is singular; \
         remove collinear covariates"
    )]
    SingularCovariance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "default tuning is undefined for n = {0} (requires n > 15); \
         supply B_n and kappa_n explicitly"
    )]
    SmallSampleTuning(usize),

    #[error("{count} moment conditions exceed the configured cap of {cap}")]
    TooManyInstruments { count: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parameter grid is empty")]
    EmptyGrid,
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid;
