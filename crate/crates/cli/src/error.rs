use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration; `path` locates the offending field.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("{0}")]
    Certificate(sppm_core::Error),

    #[error("{failed} of {total} checks failed")]
    Verify { failed: usize, total: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sppm_core::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Certificate(_) => 3,
            CliError::Verify { .. } => 4,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
