use thiserror::Error;

/// Errors raised while reading inputs or running the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed token `{text}` at position {pos}")]
    MalformedToken { pos: usize, text: String },

    #[error("unknown symbol `{text}` at position {pos}")]
    UnknownSymbol { pos: usize, text: String },

    #[error("unbalanced close at position {0}")]
    UnbalancedClose(usize),

    #[error("unclosed open at position {0}")]
    UnclosedOpen(usize),

    #[error("position {pos} out of range 1..={max}")]
    PositionOutOfRange { pos: usize, max: usize },

    /// Syntax or validation error in a transducer, automaton or grammar file.
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    /// The unambiguity precondition of the engine could not be established.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the input document rather than the model.
    pub fn is_document_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedToken { .. }
                | Error::UnknownSymbol { .. }
                | Error::UnbalancedClose(_)
                | Error::UnclosedOpen(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
