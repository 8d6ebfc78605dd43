use std::path::PathBuf;

/// Crate-wide error type. `exit_code` maps variants onto the process exit
/// codes used by the command-line tool: 2 for usage/configuration problems,
/// 3 for I/O and file-format problems, 4 for numeric aborts.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("layer {layer}: {reason}")]
    Layer { layer: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("corrupt checkpoint at byte {offset}: {what}")]
    CorruptCheckpoint { offset: usize, what: String },

    #[error("numeric abort: {0}")]
    NumericAbort(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn layer(layer: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Layer {
            layer: layer.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::CorruptCheckpoint { .. } => 3,
            Error::NumericAbort(_) => 4,
            Error::Shape { .. } | Error::Layer { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
