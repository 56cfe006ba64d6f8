//! Cluster manifest (TOML) and chunk placement on disk.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use apls_core::rscode::{encode, CodeParams};
use apls_core::NodeId;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{ClusterError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSection {
    pub k: usize,
    pub m: usize,
    pub chunk_size: usize,
    pub packet_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperSpec {
    pub id: u32,
    pub addr: String,
    /// Bits per second; absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_bw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub down_bw: Option<f64>,
    /// Whether chunks are placed on this helper.
    #[serde(default = "yes")]
    pub store: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_bw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub down_bw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarterPolicy {
    pub window_secs: f64,
    pub light_fraction: f64,
    pub refresh_secs: f64,
}

impl Default for StarterPolicy {
    fn default() -> Self {
        StarterPolicy {
            window_secs: apls_core::plan::DEFAULT_WINDOW_SECS,
            light_fraction: apls_core::plan::DEFAULT_LIGHT_FRACTION,
            refresh_secs: apls_core::plan::DEFAULT_REFRESH_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub coordinator: String,
    pub stripe_dir: PathBuf,
    #[serde(default = "one")]
    pub stripes: u32,
    #[serde(default)]
    pub seed: u64,
    pub code: CodeSection,
    /// Used when a read of an unavailable chunk names no strategy.
    #[serde(default = "default_strategy")]
    pub default_strategy: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Chunks marked unavailable, as `stripe:chunk`.
    #[serde(default)]
    pub failed: Vec<String>,
    #[serde(default)]
    pub failed_helpers: Vec<u32>,
    #[serde(default)]
    pub starter: StarterPolicy,
    #[serde(default)]
    pub requestor: Rates,
    pub helpers: Vec<HelperSpec>,
}

fn yes() -> bool {
    true
}

fn one() -> u32 {
    1
}

fn default_strategy() -> String {
    "apls-pipelined".into()
}

fn default_timeout() -> f64 {
    30.0
}

/// Parses `stripe:chunk`.
pub fn parse_chunk_id(s: &str) -> Option<(u32, u32)> {
    let (a, b) = s.trim().split_once(':')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)?;
        Manifest::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Manifest> {
        let m: Manifest = toml::from_str(text).map_err(|e| ClusterError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn params(&self) -> Result<CodeParams> {
        let c = self.code;
        Ok(CodeParams::new(c.k, c.m, c.chunk_size, c.packet_size)?)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params()?;
        let mut ids = BTreeSet::new();
        for h in &self.helpers {
            if !ids.insert(h.id) || h.id == NodeId::REQUESTOR.0 {
                return Err(ClusterError::Manifest(format!("bad or duplicate helper id {}", h.id)));
            }
            for bw in [h.up_bw, h.down_bw].into_iter().flatten() {
                if !(bw > 0.0) {
                    return Err(ClusterError::Manifest(format!("helper {} has non-positive bandwidth", h.id)));
                }
            }
        }
        if self.storage_helpers().len() < p.n() {
            return Err(ClusterError::Manifest(format!(
                "{} storage helpers cannot hold {} chunks per stripe",
                self.storage_helpers().len(),
                p.n()
            )));
        }
        for f in &self.failed {
            parse_chunk_id(f).ok_or_else(|| ClusterError::Manifest(format!("bad chunk id {f:?}")))?;
        }
        if !(self.timeout_secs > 0.0) {
            return Err(ClusterError::Manifest("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn helper(&self, id: u32) -> Option<&HelperSpec> {
        self.helpers.iter().find(|h| h.id == id)
    }

    pub fn storage_helpers(&self) -> Vec<u32> {
        self.helpers.iter().filter(|h| h.store).map(|h| h.id).collect()
    }

    /// Chunk `i` of stripe `s` lives on storage helper `(s + i) mod count`.
    pub fn holder(&self, stripe: u32, chunk: u32) -> Option<u32> {
        let n = self.code.k + self.code.m;
        if stripe >= self.stripes || chunk as usize >= n {
            return None;
        }
        let st = self.storage_helpers();
        Some(st[(stripe as usize + chunk as usize) % st.len()])
    }

    pub fn chunk_path(&self, helper: u32, stripe: u32, chunk: u32) -> PathBuf {
        self.stripe_dir.join(format!("helper{helper}")).join(format!("s{stripe}_c{chunk}.bin"))
    }

    pub fn helper_down(&self, id: u32) -> bool {
        self.failed_helpers.contains(&id)
    }

    /// Marked failed, hosted by a failed helper, or missing on disk.
    pub fn chunk_unavailable(&self, stripe: u32, chunk: u32) -> bool {
        let Some(h) = self.holder(stripe, chunk) else { return true };
        self.helper_down(h)
            || self.failed.iter().any(|f| parse_chunk_id(f) == Some((stripe, chunk)))
            || !self.chunk_path(h, stripe, chunk).exists()
    }

    pub fn addr_of(&self, id: u32) -> Option<&str> {
        self.helper(id).map(|h| h.addr.as_str())
    }
}

/// Deterministic data chunk `i` of stripe `s`.
pub fn stripe_data(params: &CodeParams, seed: u64, stripe: u32) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(stripe) << 32 | 0x5eed));
    (0..params.k)
        .map(|_| {
            let mut v = vec![0u8; params.chunk_size];
            rng.fill_bytes(&mut v);
            v
        })
        .collect()
}

/// Generates, encodes and writes `stripes` stripes under the manifest's
/// stripe directory. Returns every chunk of every stripe in order.
pub fn store_stripes(manifest: &Manifest, stripes: u32, seed: u64) -> Result<Vec<Vec<Vec<u8>>>> {
    let params = manifest.params()?;
    if manifest.storage_helpers().len() < params.n() {
        return Err(ClusterError::Manifest("placement impossible: too few storage helpers".into()));
    }
    let mut m = manifest.clone();
    m.stripes = stripes;
    let mut all = Vec::with_capacity(stripes as usize);
    for s in 0..stripes {
        let data = stripe_data(&params, seed, s);
        let parity = encode(&params, &data)?;
        let chunks: Vec<Vec<u8>> = data.into_iter().chain(parity).collect();
        for (i, c) in chunks.iter().enumerate() {
            let h = m.holder(s, i as u32).expect("placement within bounds");
            let path = m.chunk_path(h, s, i as u32);
            fs::create_dir_all(path.parent().unwrap())?;
            fs::write(&path, c)?;
        }
        all.push(chunks);
    }
    Ok(all)
}
