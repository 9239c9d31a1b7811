//! Experience-weighted attraction learning on random p-player normal-form
//! games.
//!
//! * [`ensemble`]: correlated Gaussian payoff tensors and the expected-payoff
//!   contraction.
//! * [`dynamics`]: the discrete learning map and its continuous-time limit.
//! * [`classifier`]: fixed point / limit cycle / non-convergent classification
//!   of long runs, and fixed-point multiplicity.
//! * [`theory`]: the self-consistent fixed point of the effective process,
//!   its stability and the boundary in the `(α/β, Γ)` plane.
//! * [`sweep`]: parallel parameter sweeps and their CSV/SVG/JSON outputs.

pub mod classifier;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod rng;
pub mod sweep;
pub mod theory;

pub use error::{Error, Result};
