//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// Malformed tabular input. `row` is the 1-based data row when known.
    #[error("parse error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Parse { row: Option<usize>, msg: String },

    #[error("numerical integrity violation: {0}")]
    NumericalIntegrity(String),

    /// Survival mass at this age is below 1e-12; the cause-specific hazard
    /// cannot be evaluated there.
    #[error("hazard not computable at age {age}: survival below 1e-12")]
    NonComputableHazard { age: f64 },

    /// Every multistart diverged. Carries the best point seen, if any start
    /// produced a finite likelihood at all.
    #[error("optimization failed to converge: {msg}")]
    NonConvergence {
        msg: String,
        best: Option<Box<crate::calibration::FitResult>>,
    },

    /// The control arm sees no advanced-stage diagnoses, so the relative
    /// reduction is undefined.
    #[error("stage shift undefined: control-arm advanced probability is zero")]
    UndefinedShift,

    #[error("missing table cell: {0}")]
    MissingCell(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
