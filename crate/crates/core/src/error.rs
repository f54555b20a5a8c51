use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmgdError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context} at coordinate {index}")]
    NonFinite { context: String, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("lattice coordinate overflow at index {index}")]
    Overflow { index: usize },

    #[error("{count} subsets exceeds the enumeration guard of {guard}; fall back to Monte Carlo")]
    EnumerationGuard { count: u128, guard: u128 },

    #[error("statistical error: {0}")]
    Statistical(String),

    #[error("at iteration {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<SmgdError>,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SmgdError>;

impl SmgdError {
    /// Attach the iteration index at which an error surfaced.
    pub fn at_step(self, step: u64) -> SmgdError {
        SmgdError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
