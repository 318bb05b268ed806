use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a constant signal")]
    UnsupportedSignal,

    /// Coefficient nodes too close for the divided-difference closed form.
    #[error("degenerate coefficients: clustered index pairs {pairs:?}")]
    DegenerateCoefficients { pairs: Vec<(usize, usize)> },

    #[error("coefficients are not all zero")]
    NotDegenerate,

    #[error("non-finite value at tau={tau}, q={q}")]
    NumericalBlowup { tau: f64, q: usize },

    #[error("no quote exists at zero inventory")]
    NoInventory,

    #[error("quote lower bound is unbounded and no thinning floor was configured")]
    MissingThinningBound,

    #[error("policy quote {quote} at t={t}, q={q} lies below the thinning floor {floor}")]
    PolicyBelowFloor { t: f64, q: u32, quote: f64, floor: f64 },

    #[error("payoff overflow on path seed {seed}")]
    ExtremePayoff { seed: u64 },

    #[error("need at least two paths, got {0}")]
    TooFewPaths(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown figure family `{0}`")]
    UnknownFigure(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::UnsupportedSignal
            | Error::Config(_)
            | Error::UnknownFigure(_)
            | Error::NoInventory
            | Error::MissingThinningBound
            | Error::TooFewPaths(_)
            | Error::Io(_) => 1,
            Error::DegenerateCoefficients { .. }
            | Error::NotDegenerate
            | Error::NumericalBlowup { .. }
            | Error::PolicyBelowFloor { .. }
            | Error::ExtremePayoff { .. } => 2,
        }
    }
}
