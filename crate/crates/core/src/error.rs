use alloc::string::String;

/// Errors produced by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix exponential did not converge: {0}")]
    Exponential(String),

    #[error("columns are numerically rank deficient (dt too large or corrupted state)")]
    RankDeficient,

    #[error("jump on bond {bond} has zero amplitude on the current state")]
    ZeroAmplitudeJump { bond: usize },

    #[error("step failed at t = {time}: {source}")]
    StepFailed {
        time: f64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("trajectory {index} failed: {source}")]
    TrajectoryFailed {
        index: u64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("sector too large: {0}")]
    SectorTooLarge(String),

    #[error("degenerate steady state: {count} eigenvalues with |lambda| < {tol:e}")]
    DegenerateSteadyState { count: usize, tol: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no transport: v0 = 0 admits no transition")]
    NoTransport,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
