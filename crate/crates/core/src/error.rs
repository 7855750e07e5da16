use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MinfoError {
    /// Operand dimensions do not line up.
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    /// A NaN or infinity appeared where finite values are required.
    #[error("non-finite value in {context}")]
    Numeric { context: String },

    /// Training diverged; `step` is the 1-based index of the offending step.
    #[error("non-finite {what} at training step {step}")]
    Diverged { step: usize, what: &'static str },

    /// An argument is outside its domain.
    #[error("invalid argument `{name}`: {reason}")]
    Argument { name: &'static str, reason: String },

    /// Configuration is malformed or violates an invariant. `key` names the
    /// offending setting.
    #[error("configuration error for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl MinfoError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        MinfoError::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn numeric(context: impl Into<String>) -> Self {
        MinfoError::Numeric {
            context: context.into(),
        }
    }

    pub(crate) fn argument(name: &'static str, reason: impl Into<String>) -> Self {
        MinfoError::Argument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        MinfoError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for MinfoError {
    fn from(e: std::io::Error) -> Self {
        MinfoError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MinfoError>;
