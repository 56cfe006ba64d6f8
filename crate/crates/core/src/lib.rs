//! Degraded-read reconstruction for RS-coded storage.
//!
//! * [`gf`]: GF(2^8) arithmetic and matrices.
//! * [`rscode`]: stripe encoding and decoding coefficients.
//! * [`plan`]: starter selection, reconstruction lists, packet assignment.
//! * [`strategy`]: compiles a plan into a [`strategy::DataFlowGraph`] and runs it in-process.
//! * [`netsim`]: fluid max-min bandwidth simulator and closed-form latency model.

pub mod error;
pub mod gf;
pub mod netsim;
pub mod plan;
pub mod rscode;
pub mod strategy;
pub mod units;

use std::fmt;

pub use error::{Error, Result};

/// Identifies a machine (helper, starter or requestor).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    /// The client issuing reads in the cluster runtime.
    pub const REQUESTOR: NodeId = NodeId(u32::MAX);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == NodeId::REQUESTOR {
            write!(f, "R")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "R" {
            return Ok(NodeId::REQUESTOR);
        }
        s.parse::<u32>()
            .map(NodeId)
            .map_err(|_| Error::Graph(format!("bad node id `{s}`")))
    }
}
