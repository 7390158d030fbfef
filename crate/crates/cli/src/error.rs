use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(gauss_gp::Error),

    #[error("{failed} of {total} work items failed; partial results written")]
    Partial { failed: usize, total: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Partial { .. } => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<gauss_gp::Error> for CliError {
    fn from(e: gauss_gp::Error) -> Self {
        match e {
            gauss_gp::Error::Io(source) => Self::Io {
                path: "output".into(),
                source,
            },
            // Malformed input files are reported like configuration errors.
            e @ (gauss_gp::Error::Json(_) | gauss_gp::Error::Parse { .. }) => Self::Config(e.to_string()),
            other => Self::Numerical(other),
        }
    }
}
