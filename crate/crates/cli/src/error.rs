use std::path::PathBuf;

use psrcast_core::Error as CoreError;

/// Failure categories, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps a core error with the stage it came from.
    pub fn stage(stage: &str, e: CoreError) -> Self {
        let msg = format!("{stage}: {e}");
        match e {
            CoreError::NonFiniteActivation(_)
            | CoreError::NonFiniteLoss { .. }
            | CoreError::SingularSystem
            | CoreError::NoValidNeighbor => CliError::Numeric(msg),
            CoreError::InvalidParameter(_)
            | CoreError::InvalidSpec(_)
            | CoreError::InvalidSplit(_)
            | CoreError::ShapeMismatch(_)
            | CoreError::VariantHasNoLocalBranch
            | CoreError::InvalidStep(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub(crate) trait Context<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::stage(stage, e))
    }
}
