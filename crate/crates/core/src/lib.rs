//! Bound-state and resonance (Siegert) energies of the radial Schrödinger
//! equation from Hankel determinants of the regularized logarithmic
//! derivative of the wavefunction.
//!
//! The pipeline is: [`potential`] coefficients feed the Riccati recurrence in
//! [`series`]; [`hankel`] turns the coefficients into a determinant whose roots
//! in the energy are tracked over growing dimension by [`solver`]; [`verifier`]
//! checks converged energies independently; [`cli`] drives batch runs.

pub mod cli;
pub mod hankel;
pub mod numerics;
pub mod potential;
pub mod series;
pub mod solver;
pub mod verifier;

pub use numerics::{BigComplex, PrecisionPolicy};
pub use potential::PotentialModel;
pub use solver::{ResonanceTrace, SearchRegion, TraceStatus};
