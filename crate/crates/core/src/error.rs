use thiserror::Error;

/// Every failure the library can report. The CLI maps these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty scene: {0}")]
    EmptyScene(String),
    #[error("coordinate out of range: {0}")]
    Range(String),
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("degenerate view: {0}")]
    DegenerateView(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
