use thiserror::Error;

/// Errors raised by path sampling, integration and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("state diverged: {0}")]
    Divergence(String),

    #[error("step {index} (t = {time}) failed: {source}")]
    Step {
        index: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure is numerical blow-up, possibly wrapped in a step annotation.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence(_) => true,
            Error::Step { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
