use thiserror::Error;

/// Errors raised anywhere in the simulator or the theory solver.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the range where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("memory budget exceeded: {needed} bytes required, budget is {budget} bytes")]
    Resource { needed: u128, budget: u64 },

    /// A caller broke a precondition (dimension mismatch, non-positive strategy, NaN input).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integration produced a non-finite state after t = {last_time}")]
    Integration { last_time: f64 },

    #[error("classification failed after {steps} steps: {reason}")]
    Classification { steps: u64, reason: String },

    /// The self-consistent fixed-point equations have no (reachable) solution.
    #[error("no self-consistent fixed point: {0}")]
    NoFixedPoint(String),

    #[error("dx/dz is singular at z = {z}")]
    Singular { z: f64 },

    #[error("stability boundary outside the search range: {0}")]
    BoundaryOutOfRange(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
