use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} diverged at step {step}; last finite parameters saved to {}", saved.display())]
    Diverged { stage: u8, step: usize, saved: PathBuf },
    #[error("missing prerequisite {}: {what}", path.display())]
    Missing { path: PathBuf, what: String },
    #[error("{} was produced by a different configuration (hash {found}, expected {expected})", path.display())]
    HashMismatch { path: PathBuf, found: String, expected: String },
    #[error(transparent)]
    Core(#[from] pdgmm::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged { .. } => 3,
            CliError::Missing { .. } | CliError::HashMismatch { .. } => 4,
            CliError::Core(pdgmm::Error::NonFinite(_)) => 3,
            CliError::Core(pdgmm::Error::Parameter(_)) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}
