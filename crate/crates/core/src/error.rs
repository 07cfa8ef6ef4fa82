use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdqError>;

#[derive(Debug, Error)]
pub enum SdqError {
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the circulant difference operator is singular and has no inverse")]
    SingularOperator,

    #[error("alphabet needs {requested} levels but the bit depth allows only {budget}")]
    LevelBudgetExceeded { requested: u64, budget: u64 },

    #[error("fine boundary alphabet needs {levels:.3e} levels, above the cap of {cap}")]
    FineAlphabetTooLarge { levels: f64, cap: u64 },

    #[error("unsupported bit depth {0}: the 2D scheme needs at least 2 bits")]
    UnsupportedBitDepth(u32),

    #[error(
        "encoder instability at {location}: |u| = {magnitude:.6e} exceeds threshold {threshold:.6e}"
    )]
    EncoderInstability {
        location: String,
        magnitude: f64,
        threshold: f64,
    },

    #[error("primal-dual solver diverged at iteration {iteration} (residual {residual:.3e})")]
    SolverDivergence { iteration: usize, residual: f64 },

    #[error("banded Cholesky failed at row {row}: pivot {pivot:.3e} (matrix not numerically SPD)")]
    LinearSolve { row: usize, pivot: f64 },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SdqError {
    /// Attach a location prefix to instability errors; other variants pass through.
    pub fn at(self, prefix: &str) -> Self {
        match self {
            SdqError::EncoderInstability {
                location,
                magnitude,
                threshold,
            } => SdqError::EncoderInstability {
                location: format!("{prefix} {location}"),
                magnitude,
                threshold,
            },
            other => other,
        }
    }
}
