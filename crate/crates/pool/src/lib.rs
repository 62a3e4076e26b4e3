//! Environment pool: many isolated simulator instances with reset, step,
//! snapshot, fork and judge, served in process or over a length-prefixed
//! JSON protocol.

mod client;
mod config;
mod fifo;
mod pool;
mod server;
mod stats;
pub mod wire;

use thiserror::Error;

pub use client::{default_addr, Client, ClientError, ADDR_ENV};
pub use config::PoolConfig;
pub use fifo::{FifoGuard, FifoMutex};
pub use pool::{InstanceStatus, Pool};
pub use server::{serve, ServerHandle};
pub use stats::{resident_bytes, PoolStats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("invalid pack: {0}")]
    PackInvalid(String),
    #[error("pool full: {0}")]
    PoolFull(String),
    #[error("unknown instance {0}")]
    UnknownInstance(u64),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("no episode is running on this instance")]
    NotInEpisode,
    #[error("episode has not ended")]
    EpisodeStillRunning,
    #[error("malformed action: {0}")]
    MalformedAction(String),
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl PoolError {
    /// Stable code carried in wire error responses.
    pub fn code(&self) -> &'static str {
        match self {
            PoolError::PackInvalid(_) => "PACK_INVALID",
            PoolError::PoolFull(_) => "POOL_FULL",
            PoolError::UnknownInstance(_) => "UNKNOWN_INSTANCE",
            PoolError::UnknownTemplate(_) => "UNKNOWN_TEMPLATE",
            PoolError::NotInEpisode => "NOT_IN_EPISODE",
            PoolError::EpisodeStillRunning => "EPISODE_STILL_RUNNING",
            PoolError::MalformedAction(_) => "MALFORMED_ACTION",
            PoolError::MalformedRequest(_) => "MALFORMED_REQUEST",
            PoolError::BindFailure { .. } => "BIND_FAILURE",
            PoolError::Config(_) => "CONFIG",
            PoolError::Internal(_) => "INTERNAL",
        }
    }
}
