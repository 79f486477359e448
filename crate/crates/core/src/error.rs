use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid stiffness profile: {0}")]
    InvalidProfile(String),

    #[error("degenerate convergence cycle: x_tilde_max = {0}")]
    DegenerateCycle(f64),

    #[error("invalid path duration {0} s (must be > 0)")]
    InvalidDuration(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The closed loop produced a non-finite or runaway state.
    #[error("simulation diverged at t = {t:.4} s: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid config: {0}")]
    Validation(String),

    #[error("trace format: {0}")]
    TraceFormat(String),

    #[error("unknown plot kind `{0}`")]
    UnknownPlotKind(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidProfile(_)
            | Error::Validation(_)
            | Error::ConfigParse(_)
            | Error::InvalidDuration(_)
            | Error::InvalidModel(_)
            | Error::UnknownPlotKind(_) => 2,
            Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}
