//! Localhost cluster backend: one in-process coordinator, `k+m` storage
//! helpers, one spare helper and a requestor, all on loopback sockets
//! behind their own throttles.

use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use apls_cluster::manifest::{CodeSection, HelperSpec, Rates, StarterPolicy};
use apls_cluster::{spawn_coordinator, spawn_helper, store_stripes, Coordinator, HelperHandle, Manifest, ReadMode, Requestor, ServerHandle};
use apls_core::units::mbps;

use crate::spec::{Config, Group};
use crate::{BenchError, Result};

pub struct LocalCluster {
    pub manifest: Arc<Manifest>,
    requestor: Requestor,
    data: Vec<Vec<u8>>,
    _helpers: Vec<HelperHandle>,
    _coordinator: ServerHandle,
    _dir: tempfile::TempDir,
}

impl LocalCluster {
    /// Stores one stripe generated from `seed`.
    pub fn start(g: &Group, starter_bw: Option<f64>, seed: u64) -> Result<LocalCluster> {
        let dir = tempfile::tempdir()?;
        let n = g.k + g.m;
        let coord = TcpListener::bind("127.0.0.1:0")?;
        let listeners = (0..=n).map(|_| TcpListener::bind("127.0.0.1:0")).collect::<std::io::Result<Vec<_>>>()?;
        let helper = Some(mbps(g.helper_bw));
        let fast = starter_bw.map(mbps);
        let slowest = starter_bw.unwrap_or(f64::INFINITY).min(g.helper_bw);
        let helpers = listeners
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let bw = if i < n { helper } else { fast };
                Ok(HelperSpec { id: i as u32, addr: l.local_addr()?.to_string(), up_bw: bw, down_bw: bw, store: i < n })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            coordinator: coord.local_addr()?.to_string(),
            stripe_dir: dir.path().to_path_buf(),
            stripes: 1,
            seed,
            code: CodeSection { k: g.k, m: g.m, chunk_size: g.chunk, packet_size: g.packet },
            default_strategy: "apls-pipelined".into(),
            timeout_secs: 10.0 + 20.0 * g.chunk as f64 * 8.0 / mbps(slowest),
            failed: Vec::new(),
            failed_helpers: Vec::new(),
            starter: StarterPolicy::default(),
            requestor: Rates { up_bw: fast, down_bw: fast },
            helpers,
        };
        m.validate()?;
        let data = store_stripes(&m, 1, seed)?.swap_remove(0);
        let manifest = Arc::new(m);
        let coordinator = Arc::new(Coordinator::new((*manifest).clone(), seed)?);
        let server = spawn_coordinator(coordinator, coord)?;
        let handles = listeners
            .into_iter()
            .enumerate()
            .map(|(i, l)| spawn_helper(manifest.clone(), i as u32, l, None, None))
            .collect::<apls_cluster::Result<Vec<_>>>()?;
        let requestor = Requestor::start(manifest.clone())?;
        Ok(LocalCluster { manifest, requestor, data, _helpers: handles, _coordinator: server, _dir: dir })
    }

    /// Direct read of `chunk` from its holder.
    pub fn normal(&self, chunk: usize) -> Result<Duration> {
        let out = self.requestor.read(0, chunk as u32, ReadMode::Auto)?;
        self.check(chunk, &out.data)?;
        Ok(out.latency)
    }

    /// Reconstruction of `chunk` as if it were lost.
    pub fn degraded(&self, c: &Config, chunk: usize) -> Result<Duration> {
        let agents = if c.strategy.uses_all_survivors() { c.q as u32 } else { 0 };
        let out = self.requestor.read_with(0, chunk as u32, ReadMode::Degraded(c.strategy), agents)?;
        if out.agents != c.q {
            return Err(BenchError::Backend(format!("{} used {} agents, wanted {}", c.strategy, out.agents, c.q)));
        }
        self.check(chunk, &out.data)?;
        Ok(out.latency)
    }

    fn check(&self, chunk: usize, got: &[u8]) -> Result<()> {
        if got != self.data[chunk] {
            return Err(BenchError::Backend(format!("chunk {chunk} came back corrupted")));
        }
        Ok(())
    }
}
