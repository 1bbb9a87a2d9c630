use thiserror::Error;

/// Harness failures, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] metamorph_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl HarnessError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use metamorph_core::Error as E;
        match self {
            HarnessError::Core(
                E::OutOfDomain { .. } | E::InversionFailure { .. } | E::Inadmissible(_) | E::Domain(_),
            ) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
