use thiserror::Error;

/// Errors raised by the simulator and optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("user count must be even and at least 2, got {0}")]
    OddUserCount(usize),

    #[error("base station needs at least one antenna")]
    NoAntennas,

    #[error("slot fraction {0} outside (0, 1)")]
    InvalidDelta(f64),

    #[error("AGM scale must be positive, got {0}")]
    InvalidAgmScale(f64),

    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    #[error("invalid decoding order: {0}")]
    InvalidOrder(String),

    #[error("no slot split on the grid admits a feasible allocation")]
    InstanceInfeasible,

    #[error("conic solver backend failed: {0}")]
    Solver(String),

    #[error("refusing to emit an empty result table")]
    EmptyTable,

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
