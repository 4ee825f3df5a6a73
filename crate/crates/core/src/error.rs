use thiserror::Error;

/// Errors produced by the magnitude library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two points coincide exactly, so the similarity matrix is singular.
    #[error("degenerate input: points {first} and {second} are identical")]
    DegenerateInput { first: usize, second: usize },

    /// The factorization lost positive definiteness at working precision.
    #[error("ill-conditioned system: non-positive pivot {value:e} at index {pivot}")]
    IllConditioned { pivot: usize, value: f64 },

    /// An error raised while processing one class of a labeled dataset.
    #[error("class {class}: {source}")]
    InClass {
        class: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The underlying error with any class context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InClass { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn in_class(class: usize, source: Error) -> Self {
        Error::InClass { class, source: Box::new(source) }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
