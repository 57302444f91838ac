use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text, with the 1-based line it was found on.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported parameter type {0}")]
    UnsupportedParameter(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("singular MNA matrix at {freq_hz} Hz")]
    SingularAt { freq_hz: f64 },

    #[error("pencil is singular for every s (ill-posed netlist)")]
    SingularPencil,

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("evaluation at a pole (s = {re} + {im}j)")]
    AtPole { re: f64, im: f64 },

    #[error("no threshold: max Re(poles) has the same sign at both ends ({lo_re:e}, {hi_re:e})")]
    NoThreshold { lo_re: f64, hi_re: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
