use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimerError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension overflow: {rows}x{cols} exceeds the limit of {limit} per axis")]
    DimensionOverflow { rows: usize, cols: usize, limit: usize },

    #[error("memory budget exceeded: {required_bytes} bytes required, budget is {budget_bytes} bytes")]
    BudgetExceeded {
        required_bytes: u64,
        budget_bytes: u64,
    },

    #[error("solver did not converge: {what} (residual {residual:.3e})")]
    NotConverged { what: &'static str, residual: f64 },

    #[error("steady state is not unique: nullspace dimension appears to exceed one ({detail})")]
    MultipleSteadyStates { detail: String },

    #[error("density matrix invariant violated: {0}")]
    InvalidDensityMatrix(String),

    #[error("positivity violation: eigenvalue {0:.3e} below -1e-8")]
    PositivityViolation(f64),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("step size too large: trace drifted by {drift:.3e}; retry with dt < {suggested_dt:.3e}")]
    StepSize { drift: f64, suggested_dt: f64 },

    #[error("trajectory blew up at t = {time:.6}")]
    BlowUp { time: f64 },

    #[error("spectrum has {count} eigenvalues within the steady-state threshold; the gap is ambiguous")]
    DegenerateSteadyState { count: usize },

    #[error("cutoff too small: truncated coherent state keeps only {kept_norm:.4} of its norm")]
    CutoffTooSmall { kept_norm: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

pub type Result<T> = std::result::Result<T, DimerError>;

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(DimerError::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    check_finite(name, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(DimerError::InvalidParameter {
            name,
            value,
            reason: "must be positive",
        })
    }
}
