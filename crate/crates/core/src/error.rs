use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate graph: zero degree at node {node}")]
    DegenerateGraph { node: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("training diverged at iteration {iteration} (lr = {lr}): loss = {loss}")]
    Diverged { iteration: usize, lr: f64, loss: f64 },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad configuration or input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_)
            | Error::NonFiniteGradient { .. }
            | Error::Diverged { .. }
            | Error::DegenerateGraph { .. } => true,
            Error::Row { source, .. } | Error::Epoch { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
