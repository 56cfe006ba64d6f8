//! Experiment descriptions.
//!
//! An experiment is a TOML file. Sizes take either a byte count or a string
//! such as `"256KB"`; bandwidths are in Mbit/s.
//!
//! ```toml
//! backend = "simulator"
//! strategies = ["ecpipe", "apls-pipelined"]
//! codes = [[6, 6]]
//! chunk_sizes = ["8MB"]
//! packet_sizes = ["64KB"]
//! helper_bw = [100]
//! starter_bw = 1500
//! q_values = [7, 8, 9, 10, 11]
//! repetitions = 10
//! seed = 1
//! hop_latency = 0.0
//! ```

use std::path::Path;
use std::str::FromStr;

use apls_core::strategy::Strategy;
use apls_core::units::parse_size;
use serde::{Deserialize, Deserializer, Serialize};

use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Simulator,
    Cluster,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Simulator => "simulator",
            Backend::Cluster => "cluster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub backend: Backend,
    pub strategies: Vec<String>,
    /// `[k, m]` pairs.
    pub codes: Vec<[usize; 2]>,
    #[serde(deserialize_with = "sizes")]
    pub chunk_sizes: Vec<usize>,
    #[serde(deserialize_with = "sizes")]
    pub packet_sizes: Vec<usize>,
    pub helper_bw: Vec<f64>,
    /// Absent means unconstrained.
    #[serde(default)]
    pub starter_bw: Option<f64>,
    /// Agent counts for all-survivor strategies; empty means every survivor.
    #[serde(default)]
    pub q_values: Vec<usize>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seconds per transfer, simulator only.
    #[serde(default)]
    pub hop_latency: f64,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Size {
    Bytes(usize),
    Text(String),
}

fn sizes<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    Vec::<Size>::deserialize(d)?
        .into_iter()
        .map(|s| match s {
            Size::Bytes(b) => Ok(b),
            Size::Text(t) => parse_size(&t).ok_or_else(|| serde::de::Error::custom(format!("bad size `{t}`"))),
        })
        .collect()
}

/// One measured point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub strategy: Strategy,
    pub k: usize,
    pub m: usize,
    pub q: usize,
    pub chunk: usize,
    pub packet: usize,
    /// Mbit/s.
    pub helper_bw: f64,
    pub starter_bw: Option<f64>,
}

/// Configurations sharing code, sizes and caps; one normal-read baseline
/// serves the whole group.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub k: usize,
    pub m: usize,
    pub chunk: usize,
    pub packet: usize,
    pub helper_bw: f64,
    pub configs: Vec<Config>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        let mut out: Vec<Strategy> = Vec::new();
        for s in &self.strategies {
            let st = Strategy::from_str(s).map_err(|e| BenchError::Spec(e.to_string()))?;
            if !out.contains(&st) {
                out.push(st);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Spec(msg));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.strategies.is_empty() || self.codes.is_empty() || self.helper_bw.is_empty() {
            return bad("strategies, codes and helper_bw must be non-empty".into());
        }
        if self.chunk_sizes.is_empty() || self.packet_sizes.is_empty() {
            return bad("chunk_sizes and packet_sizes must be non-empty".into());
        }
        self.strategies()?;
        for &c in &self.chunk_sizes {
            for &p in &self.packet_sizes {
                if p == 0 || c % p != 0 {
                    return bad(format!("packet size {p} does not divide chunk size {c}"));
                }
            }
        }
        for &[k, m] in &self.codes {
            if k == 0 || m == 0 || k + m > 255 {
                return bad(format!("unsupported code RS({k},{m})"));
            }
            for &q in &self.q_values {
                if q < k || q > k + m - 1 {
                    return bad(format!("q = {q} outside [{k}, {}] for RS({k},{m})", k + m - 1));
                }
            }
        }
        if self.helper_bw.iter().chain(&self.starter_bw).any(|b| !(*b > 0.0)) {
            return bad("bandwidths must be positive".into());
        }
        if !(self.hop_latency >= 0.0) {
            return bad("hop_latency must be non-negative".into());
        }
        Ok(())
    }

    /// Sweep order: code, chunk size, packet size, helper cap, then
    /// strategy and q.
    pub fn groups(&self) -> Result<Vec<Group>> {
        self.validate()?;
        let strategies = self.strategies()?;
        let mut groups = Vec::new();
        for &[k, m] in &self.codes {
            let qs: Vec<usize> = if self.q_values.is_empty() { vec![k + m - 1] } else { self.q_values.clone() };
            for &chunk in &self.chunk_sizes {
                for &packet in &self.packet_sizes {
                    for &helper_bw in &self.helper_bw {
                        let mut configs = Vec::new();
                        for &strategy in &strategies {
                            let agents = if strategy.uses_all_survivors() { qs.clone() } else { vec![k] };
                            for q in agents {
                                configs.push(Config {
                                    strategy,
                                    k,
                                    m,
                                    q,
                                    chunk,
                                    packet,
                                    helper_bw,
                                    starter_bw: self.starter_bw,
                                });
                            }
                        }
                        groups.push(Group { k, m, chunk, packet, helper_bw, configs });
                    }
                }
            }
        }
        Ok(groups)
    }
}

impl FromStr for ExperimentSpec {
    type Err = BenchError;

    fn from_str(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| BenchError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}
