use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed UAI / evidence / solution text.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("gibbs sampling failed: variable {var} has an all-zero conditional in sweep {sweep}")]
    Sampling { var: usize, sweep: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weight file error{}: {message}", tensor.as_ref().map(|t| format!(" (tensor `{t}`)")).unwrap_or_default())]
    WeightFormat { tensor: Option<String>, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("drift simulation aborted: {0}")]
    Drift(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub(crate) fn weights(tensor: Option<&str>, message: impl Into<String>) -> Self {
        Error::WeightFormat {
            tensor: tensor.map(str::to_owned),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
