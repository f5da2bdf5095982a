use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("measure has no atom with positive mass")]
    EmptySupport,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid mass {mass} at atom {atom}")]
    InvalidMass { atom: usize, mass: f64 },
    #[error("duplicate atom location at atoms {first} and {second}")]
    DuplicateLocation { first: usize, second: usize },
    #[error("probability measure has total mass {0}, expected 1")]
    NotNormalized(f64),
    #[error("atom budget exceeded: {requested} atoms requested, budget {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },
    #[error("density is negative or non-finite ({value}) at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },
    #[error("measures are defined on different atom sets")]
    BaseMismatch,
    #[error("loss is not finite ({value}) for atom {atom:?} at data point {point}")]
    NonFiniteLoss { atom: Option<usize>, point: usize, value: f64 },
    #[error("constraint radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no convergence after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;
