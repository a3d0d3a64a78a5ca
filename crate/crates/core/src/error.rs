//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("split index {split} unusable for {steps} steps: {reason}")]
    SplitIndex {
        split: usize,
        steps: usize,
        reason: &'static str,
    },

    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),

    #[error("second-kind step solve near singular: |1 + weight*a| = {denom:.3e}")]
    NearSingular { denom: f64 },

    #[error("kernel node solve singular at step {node}: |1 + weight*a| = {denom:.3e}")]
    VolterraSingular { node: usize, denom: f64 },

    #[error("condition H7 violated (Phi(A u0) must be nonzero): |Phi(A u0)| = {value:.3e} <= tol {tol:.3e}")]
    ChiSingular { value: f64, tol: f64 },

    #[error(
        "fixed-point iteration diverged at step {step}: last residuals {res_prev:.3e}, {res_last:.3e}"
    )]
    PicardDiverged {
        step: usize,
        res_prev: f64,
        res_last: f64,
    },

    #[error("compatibility condition '{name}' violated: residual {residual:.3e} > tol {tol:.3e}")]
    Incompatible {
        name: String,
        residual: f64,
        tol: f64,
    },

    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("history/tail junction mismatch: max |diff| = {0:.3e}")]
    JunctionMismatch(f64),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv parse: {0}")]
    CsvParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
