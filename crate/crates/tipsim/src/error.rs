//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TipError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular denominator in {context}: {detail}")]
    Singularity { context: String, detail: String },

    #[error("degenerate levels in Schrieffer-Wolff solve: |E_{m} - E_{n}| = {gap:.3e} rad/ns below tolerance {tol:.3e}")]
    Degeneracy { m: usize, n: usize, gap: f64, tol: f64 },

    #[error("ambiguous dressed-state assignment: label {label} has overlap {overlap:.4} <= 0.5")]
    AmbiguousDressing { label: String, overlap: f64 },

    #[error("integration failure: {0}")]
    IntegrationFailure(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("phase unwrap ambiguity: step {step} jumps by {jump:.3} rad (>= pi); use a finer pulse-count spacing")]
    PhaseAliasing { step: usize, jump: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, TipError>;
