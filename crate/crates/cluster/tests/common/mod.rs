#![allow(dead_code)]

use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use apls_cluster::coordinator::spawn_coordinator;
use apls_cluster::manifest::{CodeSection, HelperSpec, Rates, StarterPolicy};
use apls_cluster::{spawn_helper, store_stripes, Coordinator, HelperHandle, Manifest, ServerHandle};

pub struct Cluster {
    pub manifest: Arc<Manifest>,
    pub coordinator: Arc<Coordinator>,
    pub helpers: Vec<HelperHandle>,
    pub stripes: Vec<Vec<Vec<u8>>>,
    _server: ServerHandle,
    _dir: tempfile::TempDir,
}

pub struct Layout {
    pub k: usize,
    pub m: usize,
    pub chunk: usize,
    pub packet: usize,
    pub spares: usize,
    pub stripes: u32,
    pub helper_bw: Option<f64>,
}

impl Layout {
    pub fn small(k: usize, m: usize) -> Layout {
        Layout { k, m, chunk: 64 * 1024, packet: 4096, spares: 1, stripes: 2, helper_bw: None }
    }
}

pub fn manifest(dir: &Path, l: &Layout, coordinator: String, addrs: &[String]) -> Manifest {
    let n = l.k + l.m;
    Manifest {
        coordinator,
        stripe_dir: dir.to_path_buf(),
        stripes: l.stripes,
        seed: 42,
        code: CodeSection { k: l.k, m: l.m, chunk_size: l.chunk, packet_size: l.packet },
        default_strategy: "apls-pipelined".into(),
        timeout_secs: 20.0,
        failed: Vec::new(),
        failed_helpers: Vec::new(),
        starter: StarterPolicy::default(),
        requestor: Rates::default(),
        helpers: addrs
            .iter()
            .enumerate()
            .map(|(i, a)| HelperSpec {
                id: i as u32,
                addr: a.clone(),
                up_bw: l.helper_bw,
                down_bw: l.helper_bw,
                store: i < n,
            })
            .collect(),
    }
}

/// Starts an in-process cluster; `edit` may adjust the manifest after the
/// data has been stored.
pub fn start(l: &Layout, edit: impl FnOnce(&mut Manifest)) -> Cluster {
    let dir = tempfile::tempdir().unwrap();
    let n = l.k + l.m + l.spares;
    let coord_l = TcpListener::bind("127.0.0.1:0").unwrap();
    let helper_ls: Vec<TcpListener> = (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    let addrs: Vec<String> = helper_ls.iter().map(|h| h.local_addr().unwrap().to_string()).collect();
    let mut m = manifest(dir.path(), l, coord_l.local_addr().unwrap().to_string(), &addrs);
    let stripes = store_stripes(&m, l.stripes, m.seed).unwrap();
    edit(&mut m);
    let manifest = Arc::new(m);
    let coordinator = Arc::new(Coordinator::new((*manifest).clone(), 7).unwrap());
    let server = spawn_coordinator(coordinator.clone(), coord_l).unwrap();
    let helpers = helper_ls
        .into_iter()
        .enumerate()
        .map(|(i, hl)| spawn_helper(manifest.clone(), i as u32, hl, None, None).unwrap())
        .collect();
    Cluster { manifest, coordinator, helpers, stripes, _server: server, _dir: dir }
}
