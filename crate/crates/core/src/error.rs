use thiserror::Error;

/// Errors raised by the serial tables and the kick-out planners.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid table configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid hash list: {0}")]
    InvalidHashes(String),

    #[error("corrupt table state: {0}")]
    CorruptState(String),

    /// A search spent its whole spawn budget (or ran out of candidates)
    /// without reaching a free or duplicate slot.
    #[error("no kick-out chain found after {spawns} spawns")]
    SearchExhausted { spawns: usize },

    /// The table changed between planning a chain and applying it.
    #[error("stale kick-out chain: {0}")]
    StaleChain(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
