use thiserror::Error;

/// Failure classes shared by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("capability exceeded: {0}")]
    Capability(String),
    #[error("degenerate smoother: diagonal entry at node {node} is {value}")]
    Degenerate { node: usize, value: f64 },
    #[error("tuning failed: {0}")]
    Tuning(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Dimension { .. } => 2,
            Error::Parse { .. } | Error::Io { .. } => 3,
            Error::Numeric(_) | Error::Degenerate { .. } | Error::Tuning(_) => 4,
            Error::Capability(_) => 5,
        }
    }

    /// Short diagnostic class name printed by the CLI.
    pub fn class(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "parse",
            4 => "numeric",
            _ => "capability",
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
