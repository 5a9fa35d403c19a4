//! Numerical laboratory for path-distribution dependent SDEs with infinite
//! memory and Dini-continuous drift.
//!
//! The crate discretises the weighted path space `C_τ`, removes the irregular
//! drift with a Zvonkin-type change of variables, simulates the drift-corrected
//! asymptotic coupling together with its Girsanov density, estimates
//! Wasserstein distances between particle clouds in the truncated path
//! seminorms, and checks the asymptotic log-Harnack, gradient and `W₂`-growth
//! inequalities by Monte Carlo.

pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod par;
pub mod pathspace;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod wasserstein;
pub mod zvonkin;

pub use error::{Error, Result};
pub use pathspace::{PathSegment, PathSpaceConfig};
pub use simulate::{LawSummary, ParticleCloud};
