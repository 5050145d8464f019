use std::path::PathBuf;

/// Errors produced anywhere in the pruning engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("layer {layer}: invalid geometry: {reason}")]
    Geometry { layer: usize, reason: String },

    #[error("{what} index {index} out of range (valid: {valid})")]
    Index {
        what: &'static str,
        index: usize,
        valid: String,
    },

    #[error("{what} = {value} is outside {range}")]
    Domain {
        what: String,
        value: f64,
        range: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("evaluator failed: {0}")]
    Evaluator(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(what: impl Into<String>, value: f64, range: &'static str) -> Self {
        Error::Domain {
            what: what.into(),
            value,
            range,
        }
    }
}
