use std::path::PathBuf;

use hcip_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A numerical or validation failure inside one pipeline step.
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: CoreError,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),

    /// A file that does not parse as the expected format.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

/// Process exit status for each failure class.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const NONCONVERGENCE: i32 = 3;
    pub const NO_STABLE_INTERVAL: i32 = 4;
}

impl CliError {
    pub fn step(step: &'static str) -> impl FnOnce(CoreError) -> CliError {
        move |source| CliError::Step { step, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> CliError {
        CliError::Format { path: path.into(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Step { source, .. } => match source.root() {
                CoreError::NonConvergence { .. } | CoreError::Vanishing { .. } => exit::NONCONVERGENCE,
                // No target signal at all leaves nothing to select either.
                CoreError::NoStableInterval { .. } | CoreError::FlatResponse(_) => exit::NO_STABLE_INTERVAL,
                CoreError::Invalid(_) | CoreError::GridMismatch(_) | CoreError::Sweep { .. } => exit::VALIDATION,
            },
            CliError::Io { .. } | CliError::Config(_) | CliError::Format { .. } => exit::VALIDATION,
        }
    }
}
