use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, BennError>;

#[derive(Debug, thiserror::Error)]
pub enum BennError {
    #[error(transparent)]
    Core(#[from] benn_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BennError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BennError::Io { path: path.into(), source }
    }

    /// Process exit status: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use benn_core::Error as E;
        match self {
            BennError::Usage(_) => 1,
            BennError::Core(e) => match root(e) {
                E::Numerical(_) | E::NonFinite { .. } | E::AllRejected { .. } | E::DegenerateWeights => 3,
                E::InvalidArgument(_) => 1,
                _ => 2,
            },
            _ => 2,
        }
    }
}

fn root(mut e: &benn_core::Error) -> &benn_core::Error {
    while let benn_core::Error::Layer { source, .. } = e {
        e = source;
    }
    e
}

pub fn read(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| BennError::io(path, e))
}

pub fn write(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| BennError::io(path, e))
}
