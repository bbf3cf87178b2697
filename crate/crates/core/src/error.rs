use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("config parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{stage} projection did not reach tolerance within {max_iter} iterations at t = {t}")]
    ProjectionFailed {
        stage: &'static str,
        t: f64,
        max_iter: usize,
    },

    #[error("non-finite field value at t = {t}")]
    NonFinite { t: f64 },

    #[error("radius {radius} is outside the grid extent {extent}")]
    OutOfRange { radius: f64, extent: f64 },

    #[error("invalid bracket: {0}")]
    Bracket(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
