use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rectangle has non-integral corners: {0}")]
    NonIntegralRect(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// A configuration lies on (or inside) a collision set.
    #[error("configuration outside the domain: index {index} ({detail})")]
    Domain { index: usize, detail: String },

    #[error("scene violates hypotheses: {}", .0.join("; "))]
    Hypothesis(Vec<String>),

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bound constant is unspecified: {0}")]
    UnspecifiedConstant(&'static str),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
