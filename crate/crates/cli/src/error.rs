use std::path::PathBuf;

/// Failures of the command-line layer, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration input; exit code 2.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("config error: {0}")]
    ConfigGeneral(String),

    /// Anything that goes wrong after the configuration was accepted; exit
    /// code 1.
    #[error(transparent)]
    Core(#[from] mrenkf::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::ConfigGeneral(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
