use std::path::PathBuf;

/// Everything that can go wrong outside of caller bugs (which panic via
/// debug assertions instead).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or config field failed validation.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },

    /// An override key did not match any config field, or matched more than one.
    #[error("unknown or ambiguous config key `{key}`: {reason}")]
    BadOverride { key: String, reason: String },

    /// The linear system lost its pivot during elimination.
    #[error("tridiagonal solve hit a zero pivot at row {row}")]
    SingularPivot { row: usize },

    /// Grid/stencil preconditions not met.
    #[error("cannot assemble system: {0}")]
    Assembly(String),

    #[error("failed to {action} `{path}`: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn io(action: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            action,
            path: path.into(),
            source,
        }
    }
}
