//! Multi-time wave functions built from superpositions of local products of
//! Gaussian packets, with each particle evolving under its own time.

mod packet;
mod residual;
mod state;

pub use packet::{GaussianPacket, Potential};
pub use residual::{
    hj_continuity_residual, max_schrodinger_residual, schrodinger_residual, FdSteps,
};
pub use state::{Amplitude, MftState, ProductState, TimeVector, WaveFunction, NODE_THRESHOLD};
