use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KamError {
    #[error("invalid grading: {0}")]
    InvalidGrading(String),
    #[error("grading mismatch between operands")]
    GradingMismatch,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("reality symmetry violated: imaginary residue {residue:e} exceeds {allowed:e}")]
    RealityViolated { residue: f64, allowed: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resonant divisor at q-mode {mode:?}")]
    ResonantDivisor { mode: alloc::vec::Vec<i32> },
    #[error("nonzero q-average {0:e} passed to a solver that requires zero mean")]
    NonzeroMean(f64),
    #[error("solver precondition violated at q-mode {mode:?}: {detail}")]
    Precondition { mode: alloc::vec::Vec<i32>, detail: String },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("ill-conditioned linear system: condition estimate {0:e}")]
    IllConditioned(f64),
    #[error("Lie series does not decay: term {order} majorant {term:e} vs previous {previous:e}")]
    NonConvergentLie { order: usize, term: f64, previous: f64 },
    #[error("symplecticity residual {0:e} above tolerance")]
    NotSymplectic(f64),
    #[error("Diophantine condition violated: {0}")]
    ConditionI(String),
    #[error("nondegeneracy condition violated: {0}")]
    ConditionII(String),
    #[error("definiteness condition violated: {0}")]
    ConditionIII(String),
    #[error("lattice error: {0}")]
    Lattice(String),
    #[error("projection error: {0}")]
    Projection(String),
    #[error("displacement {0:e} exceeds the analyticity margin")]
    DisplacementTooLarge(f64),
    #[error("cohomological solve failed at phi-grid point {point}: {detail}")]
    CohomologicalFailure { point: usize, detail: String },
    #[error("precondition of the iteration violated: {0}")]
    IterationPrecondition(String),
}

pub type Result<T> = core::result::Result<T, KamError>;
