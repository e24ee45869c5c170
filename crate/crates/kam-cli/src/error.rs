use kam_core::KamError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input data or a violated admissibility condition (exit 2).
    #[error("precondition failure: {0}")]
    Precondition(String),
    /// The iteration or the torus search did not succeed (exit 3).
    #[error("convergence failure: {0}")]
    Convergence(String),
    /// Unreadable, unparsable or unwritable files (exit 4).
    #[error("I/O failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Precondition(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {}", path.display(), e))
    }
}

impl From<KamError> for CliError {
    fn from(e: KamError) -> Self {
        match e {
            KamError::InvalidGrading(_)
            | KamError::GradingMismatch
            | KamError::IndexOutOfRange(_)
            | KamError::RealityViolated { .. }
            | KamError::InvalidArgument(_)
            | KamError::ResonantDivisor { .. }
            | KamError::ConditionI(_)
            | KamError::ConditionII(_)
            | KamError::ConditionIII(_)
            | KamError::Lattice(_)
            | KamError::IterationPrecondition(_) => CliError::Precondition(e.to_string()),
            _ => CliError::Convergence(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
