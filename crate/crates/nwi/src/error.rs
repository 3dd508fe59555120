use std::path::PathBuf;

use nwi_core::Property;

pub type Result<T, E = NwiError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum NwiError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("missing {property} map: {path} not found")]
    MissingMap { property: Property, path: PathBuf },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    ConfigSyntax {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot serialize {what}: {source}")]
    Serialize {
        what: &'static str,
        #[source]
        source: toml::ser::Error,
    },
    #[error("benchmark needs {required} bytes, budget is {budget}")]
    BudgetExceeded { required: usize, budget: usize },
    #[error("gradient check failed for {0}")]
    GradcheckFailed(String),
    #[error(transparent)]
    Core(#[from] nwi_core::Error),
}

impl NwiError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NwiError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        NwiError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        NwiError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
