//! Many-fingered-time quantum mechanics and its Bohmian beables.
//!
//! Each particle carries its own time coordinate, so the state is a
//! function Ψ(x₁…xₙ, t₁…tₙ). The crate evaluates such states exactly for
//! non-interacting Gaussian superpositions, integrates the beables
//! xᵢ(T) along the diagonal flow `Σⱼ ∂/∂tⱼ`, and provides the ensemble and
//! locality diagnostics used to check equivariance, branch statistics and
//! cross-time dependence.

pub mod dynamics;
pub mod ensemble;
mod error;
pub mod locality;
pub mod wavefunction;

pub use error::{Error, Result};
