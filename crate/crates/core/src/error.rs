use thiserror::Error;

use crate::protocol::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty coalition has no value")]
    EmptyCoalition,

    #[error("agent {agent} is not a member of coalition {coalition}")]
    NotAMember { agent: usize, coalition: String },

    #[error("agent {agent} out of range for a game with {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },

    #[error("at most {max} agents are supported, got {n}")]
    TooManyAgents { n: usize, max: usize },

    #[error("invalid capability profile: {0}")]
    InvalidProfile(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid oracle: {0}")]
    InvalidOracle(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration budget exceeded: {needed} items requested, cap is {cap}")]
    EnumerationCap { needed: u128, cap: u128 },

    #[error("no value gap: every per-capita value coincides")]
    NoValueGap,

    #[error("external oracle has no attached endpoint")]
    ExternalUnavailable,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed episode log: {0}")]
    MalformedLog(String),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
