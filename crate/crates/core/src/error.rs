use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{matrix} is rank deficient: numerical rank {rank}, expected {expected}")]
    RankDeficient {
        matrix: &'static str,
        rank: usize,
        expected: usize,
    },
    #[error("regularised normal matrix is numerically singular")]
    SingularSystem,
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("transfer function has a pole on the evaluation grid at omega = {omega} rad/s")]
    PoleOnGrid { omega: f64 },
    #[error("delay of {delay_s} s is not an integer number of samples at {fs_hz} Hz")]
    NonIntegerDelay { delay_s: f64, fs_hz: f64 },
    #[error("transfer function is improper (numerator degree exceeds denominator degree)")]
    ImproperSystem,
    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(String),
    #[error("scalar sensitivity vanishes at omega = {omega} rad/s")]
    SensitivityZero { omega: f64 },
    #[error("inner loop matrix is singular at omega = {omega} rad/s")]
    SingularLoop { omega: f64 },
    #[error("direction is orthogonal to the range of R_{0}")]
    DegenerateDirection(&'static str),
    #[error("infeasible dimensions: {0}")]
    InfeasibleDimensions(String),
    #[error("frequency {freq_hz} Hz is at or above the Nyquist frequency {nyquist_hz} Hz")]
    FrequencyAboveNyquist { freq_hz: f64, nyquist_hz: f64 },
    #[error("simulation diverged at sample {sample}: |y|_inf = {magnitude:e}")]
    Diverged { sample: usize, magnitude: f64 },
    #[error("signal is empty or too short")]
    EmptySignal,
    #[error("bad segmentation: {0}")]
    BadSegmentation(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures rooted in the numerics (rank, singularity, divergence)
    /// rather than in malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::SingularSystem
                | Error::ZeroColumn(_)
                | Error::ZeroMatrix
                | Error::PoleOnGrid { .. }
                | Error::SensitivityZero { .. }
                | Error::SingularLoop { .. }
                | Error::DegenerateDirection(_)
                | Error::Diverged { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::SingularSystem => "SingularSystem",
            Error::ZeroColumn(_) => "ZeroColumn",
            Error::ZeroMatrix => "ZeroMatrix",
            Error::NonFinite(_) => "NonFinite",
            Error::PoleOnGrid { .. } => "PoleOnGrid",
            Error::NonIntegerDelay { .. } => "NonIntegerDelay",
            Error::ImproperSystem => "ImproperSystem",
            Error::InvalidBandwidth(_) => "InvalidBandwidth",
            Error::SensitivityZero { .. } => "SensitivityZero",
            Error::SingularLoop { .. } => "SingularLoop",
            Error::DegenerateDirection(_) => "DegenerateDirection",
            Error::InfeasibleDimensions(_) => "InfeasibleDimensions",
            Error::FrequencyAboveNyquist { .. } => "FrequencyAboveNyquist",
            Error::Diverged { .. } => "Diverged",
            Error::EmptySignal => "EmptySignal",
            Error::BadSegmentation(_) => "BadSegmentation",
            Error::Validation(_) => "Validation",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
