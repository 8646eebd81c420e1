use thiserror::Error;

#[derive(Debug, Error)]
pub enum ZnlError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("non-finite multiplier symbol at mode {0}")]
    NanSymbol(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical blow-up at t = {t}")]
    BlowupNumerical { t: f64 },
    #[error("boundary contamination at t = {t}: wrap-around fraction {wrap:e}")]
    BoundaryContamination { t: f64, wrap: f64 },
    #[error("{0}")]
    Config(String),
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ZnlError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> ZnlError {
    ZnlError::InvalidArgument(msg.into())
}
