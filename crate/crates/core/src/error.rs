use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("system is numerically singular at {at}")]
    Singular { at: String },

    #[error("pencil (A, E) is singular: det(sE - A) vanishes at every probe point")]
    SingularPencil,

    #[error("sampling period must be strictly positive, got {0}")]
    NonPositiveStep(f64),

    #[error("frequency {omega} rad/s outside the band (0, {limit}]")]
    OutsideBand { omega: f64, limit: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("Loewner rank collapsed to zero: data carry no dynamics")]
    RankCollapse,

    #[error("under-sampled: fitted order {order} equals the data count {points}; increase N")]
    UnderSampled { order: usize, points: usize },

    #[error("defective eigenstructure (eigenvector matrix condition estimate {0:.3e})")]
    Defective(f64),

    #[error("frequency sweep hit a pole near {0} rad/s")]
    PoleOnSweep(f64),

    #[error("invalid delay bracket: {0}")]
    InvalidBracket(String),

    #[error("non-monotone stability classification: stable at {stable:?}, unstable at {unstable:?}")]
    NonMonotone { stable: Vec<f64>, unstable: Vec<f64> },

    #[error("trace too short: {windows} envelope windows, need at least {needed}")]
    TraceTooShort { windows: usize, needed: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Parse/usage errors versus numerical failures, for CLI exit codes.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse(_) | Error::Io(_) | Error::DimensionMismatch(_) | Error::InvalidData(_))
    }
}
