//! Simulation engine for coalition formation among capability-profiled agents
//! with bounded-rational preference oracles.
//!
//! The crate is organised bottom-up: [`game`] defines instances and the value
//! function, [`preferences`] answers coalition comparisons, [`dynamics`] runs
//! improving-deviation episodes, [`stability`] certifies partitions, [`bounds`]
//! evaluates closed-form guarantees and [`experiments`] batches everything into
//! condition sweeps. [`protocol`] is the boundary to out-of-process oracles.

pub mod bounds;
pub mod coalition;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod game;
pub mod preferences;
pub mod protocol;
pub mod reference;
pub mod stability;

pub use coalition::{Coalition, Partition, MAX_AGENTS};
pub use error::{Error, Result};
pub use game::{AgentSpec, Aggregation, CapabilityProfile, GameSpec, ValueTable};
pub use preferences::{Confidence, OracleKind, OracleSpec, PreferenceAnswer, PreferenceQuery, Verdict};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
