use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {matrix}{}: expected {}x{}, found {}x{}",
        .step.map(|t| format!(" at step {t}")).unwrap_or_default(),
        .expected.0, .expected.1, .found.0, .found.1)]
    DimensionMismatch {
        matrix: String,
        step: Option<usize>,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{matrix} must be {requirement} (eigenvalue {eigenvalue:e})")]
    NotDefinite {
        matrix: String,
        requirement: &'static str,
        eigenvalue: f64,
    },

    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("{what} = {value} is out of range ({bound})")]
    OutOfRange {
        what: String,
        value: f64,
        bound: String,
    },

    #[error("infeasible at level {gamma}: margin {margin:e} >= 0 at step {step}")]
    Infeasible { gamma: f64, step: usize, margin: f64 },

    #[error("no feasible level found after {doublings} doublings")]
    BracketFailure { doublings: usize },

    #[error("block pivot {pivot} is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { pivot: usize, eigenvalue: f64 },

    #[error("controller is not causal: block ({row}, {col}) has magnitude {magnitude:e}")]
    CausalityViolation {
        row: usize,
        col: usize,
        magnitude: f64,
    },

    #[error("dense oracle refuses size {size} (cap {cap})")]
    OracleTooLarge { size: usize, cap: usize },

    #[error("structural mismatch in {what}: residual {residual:e}")]
    StructuralMismatch { what: String, residual: f64 },

    #[error("controller emitted a non-finite control at step {step}")]
    NonFinite { step: usize },

    #[error("singular matrix in {0}")]
    Singular(String),
}
