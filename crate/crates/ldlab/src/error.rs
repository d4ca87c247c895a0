//! Error type shared by every module.

/// Crate-wide error enum. Variants are grouped by how callers should react:
/// `InvalidInput` and `StiffnessGuard` are usage errors (fix the inputs),
/// `Divergence` and `Singular` are numerical failures of a run.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested step size cannot resolve the stiff drift. The engine
    /// refuses to run rather than produce garbage.
    #[error(
        "step size {dt:.3e} exceeds the stability guard {guard:.3e}; \
         use at least {suggested_steps} steps"
    )]
    StiffnessGuard {
        dt: f64,
        guard: f64,
        suggested_steps: usize,
    },

    /// A state coordinate left the trust region (|value| > 1e8) or became
    /// non-finite during time stepping.
    #[error("state diverged at step {step} (t = {t:.6}): |coordinate {coord}| = {value:.3e}")]
    Divergence {
        step: usize,
        t: f64,
        coord: usize,
        value: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
