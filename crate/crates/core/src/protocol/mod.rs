//! Boundary to out-of-process preference oracles.
//!
//! A plugin receives one JSON object per line carrying a rendered prompt and
//! the query, and answers with one JSON object per line carrying a verdict.
//! The engine knows nothing about what sits behind the endpoint.

mod external;
mod parse;
mod prompt;
mod wire;

use thiserror::Error;

pub use external::{ExternalPlugin, HttpEndpoint, StdioEndpoint, Transport, DEFAULT_TIMEOUT_MS};
pub use parse::parse_declaration;
pub use prompt::{render_prompt, PromptProtocol, PromptTemplate, COALT_SECTIONS, DEFAULT_TASK_DIMS};
pub use wire::{WireAnswer, WireQuery, WIRE_VERSION};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("oracle did not answer within {0} ms")]
    Timeout(u64),

    #[error("malformed oracle reply: {0}")]
    Malformed(String),

    #[error("reply carries query id {got}, expected {expected}")]
    IdMismatch { expected: u64, got: u64 },

    #[error("unsupported wire version {0}")]
    Version(u32),

    #[error("no preference declaration found: {0}")]
    ParseFailure(String),

    #[error("prompt placeholder has no data: {0}")]
    MissingPlaceholder(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("oracle endpoint closed")]
    Closed,
}
