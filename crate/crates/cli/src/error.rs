use thiserror::Error;

/// Failures mapped onto the process exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] simcon::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A check ran to completion and reported failures.
    #[error("{0}")]
    CheckFailed(String),
}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

impl CliError {
    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        use simcon::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Config(_)) => EXIT_CONFIG,
            CliError::Core(E::Diverged { .. }) => EXIT_DIVERGED,
            CliError::Core(
                E::Ingestion { .. } | E::InsufficientData(_) | E::InvalidData(_) | E::Checkpoint(_) | E::Io { .. },
            )
            | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(E::Dimension { .. } | E::Oracle { .. }) | CliError::CheckFailed(_) => EXIT_FAILURE,
        }
    }
}
