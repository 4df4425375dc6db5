use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// |Ψ| fell below the node threshold relative to the largest branch term.
    #[error("wave-function node: |psi| is {relative:.3e} of the largest branch magnitude")]
    Node { relative: f64 },

    /// Step halving was exhausted while integrating through a node.
    #[error("trajectory stalled at a node (last good tau = {last_tau})")]
    NodeStall { last_tau: f64, position: Vec<f64> },

    #[error("configuration is unclassifiable: every branch weight vanishes")]
    Unclassifiable,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn is_node(&self) -> bool {
        matches!(self, Error::Node { .. })
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
