//! Error types shared across the solver modules.

use thiserror::Error;

/// Errors surfaced by grid construction and the solvers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid parameter: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Newton iteration did not converge after {iterations} steps (last residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("near-singular Jacobian (|det| = {det:.3e}, floor {floor:.3e})")]
    SingularJacobian { det: f64, floor: f64 },

    #[error("constrained inversion rejected: datum has kernel component {kernel_norm:.3e} (limit {limit:.1e})")]
    KernelComponent { kernel_norm: f64, limit: f64 },

    #[error("constrained inversion stopped at relative residual {residual:.3e} after {iterations} iterations")]
    InversionResidual { residual: f64, iterations: usize },

    #[error("half-space iteration did not converge: last residuals {history:?}")]
    MilneDiverged { history: Vec<f64> },

    #[error("half-space flux violation: max |∫v₁F dv| = {flux:.3e}")]
    FluxViolation { flux: f64 },

    #[error("slip extraction found cross component {found:.3e} of dominant {dominant:.3e} in {which}")]
    CrossComponent {
        which: String,
        found: f64,
        dominant: f64,
    },

    #[error("linear slab solve rejected: {0}")]
    BadSource(String),

    #[error("linear slab solve stalled (residual {residual:.3e} after {iterations} sweeps)")]
    SweepStalled { residual: f64, iterations: usize },

    #[error("remainder iteration diverging (norm grew over {0} consecutive iterations); try smaller |θ₁−θ₀| or ε")]
    RemainderDiverging(usize),

    #[error("missing prerequisite: {0}")]
    Missing(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
