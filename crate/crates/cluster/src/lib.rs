//! Multi-process runtime for degraded reads: a coordinator that plans,
//! helpers that store chunks and execute their part of a data flow, and a
//! requestor client that reassembles the result.

pub mod coordinator;
pub mod helper;
pub mod manifest;
pub mod requestor;
mod runtime;
pub mod throttle;
pub mod wire;

use std::io;

pub use coordinator::{coordinator_serve, spawn_coordinator, Coordinator};
pub use helper::{helper_serve, spawn_helper, HelperHandle};
pub use manifest::{parse_chunk_id, store_stripes, Manifest};
pub use wire::ReadMode;
pub use requestor::{requestor_read, ReadOutcome, Requestor};
pub use runtime::{Counters, ServerHandle};
pub use throttle::Throttle;

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("wire: {0}")]
    Wire(#[from] wire::WireError),
    #[error(transparent)]
    Core(#[from] apls_core::error::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("remote error: {0}")]
    Remote(String),
    #[error("timed out after {0:.1}s")]
    Timeout(f64),
    #[error("protocol: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, ClusterError>;

/// Seed from `APLS_SEED`, else `fallback`.
pub fn seed_from_env(fallback: u64) -> u64 {
    std::env::var("APLS_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(fallback)
}
