//! Numerical laboratory for the symmetric Keyfitz-Kranzer system with
//! linear damping.
//!
//! * [`model`]: flux, Jacobian, eigenstructure, Riemann invariants
//! * [`entropy`]: radial entropy-entropy flux pairs
//! * [`region`]: the invariant region Σ and its boundary-flow diagnostics
//! * [`solver`]: finite-volume solver with exact damping
//! * [`viscous`]: parabolic regularization and vanishing-viscosity sweeps
//! * [`analysis`]: norms, exact oracles, decay fits, entropy residuals
//! * [`cli`]: scenario files and the runner behind the `kkd` binary

pub mod analysis;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod model;
pub mod numerics;
pub mod region;
pub mod solver;
pub mod viscous;

pub use error::{Error, Result};
