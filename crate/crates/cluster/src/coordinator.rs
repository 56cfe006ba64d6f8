//! Coordinator: chunk locations, load statistics and reconstruction
//! planning.

use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use apls_core::error::Error as CoreError;
use apls_core::gf::GfMatrix;
use apls_core::plan::{build_plan, Agent, LoadTable, PlanRequest, ReconstructionPlan};
use apls_core::strategy::{build_flow, flow_byte_summary, Strategy};
use apls_core::NodeId;
use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::Manifest;
use crate::runtime::{spawn_accept, ServerHandle};
use crate::wire::{self, CommandEnvelope, Message, ReadMode, ReadRequest, ReadResponse};
use crate::{ClusterError, Result};

struct State {
    load: LoadTable,
    rng: ChaCha8Rng,
}

pub struct Coordinator {
    manifest: Manifest,
    generator: GfMatrix,
    default_strategy: Strategy,
    epoch: Instant,
    next_id: AtomicU64,
    state: Mutex<State>,
}

impl Coordinator {
    pub fn new(manifest: Manifest, seed: u64) -> Result<Coordinator> {
        manifest.validate()?;
        let generator = manifest.params()?.generator()?;
        let default_strategy: Strategy = manifest.default_strategy.parse()?;
        let sp = &manifest.starter;
        let load = LoadTable::new(sp.window_secs)
            .with_light_fraction(sp.light_fraction)
            .with_refresh_interval(sp.refresh_secs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = rng.next_u64() >> 16 << 16;
        Ok(Coordinator {
            manifest,
            generator,
            default_strategy,
            epoch: Instant::now(),
            next_id: AtomicU64::new(base.max(1)),
            state: Mutex::new(State { load, rng }),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    /// Adds traffic to the load table as if `node` served `bytes` now.
    pub fn record_load(&self, node: NodeId, bytes: u64) {
        let now = self.now();
        self.state.lock().unwrap().load.record_request(node, bytes, now);
    }

    pub fn bytes_in_window(&self, node: NodeId) -> u64 {
        let now = self.now();
        self.state.lock().unwrap().load.bytes_in_window(node, now)
    }

    /// Answers one read request.
    pub fn handle(&self, req: &ReadRequest) -> ReadResponse {
        match self.try_handle(req) {
            Ok(r) => r,
            Err(e) => ReadResponse::Error(e.to_string()),
        }
    }

    fn try_handle(&self, req: &ReadRequest) -> Result<ReadResponse> {
        let m = &self.manifest;
        let holder = m
            .holder(req.stripe, req.chunk)
            .ok_or_else(|| ClusterError::Remote(format!("unknown chunk {}:{}", req.stripe, req.chunk)))?;
        let read_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let strategy = match req.mode {
            ReadMode::Auto if !m.chunk_unavailable(req.stripe, req.chunk) => {
                self.record_load(NodeId(holder), m.code.chunk_size as u64);
                let addr = m.addr_of(holder).unwrap_or_default().to_owned();
                return Ok(ReadResponse::Redirect { read_id, node: NodeId(holder), addr });
            }
            ReadMode::Auto => self.default_strategy,
            ReadMode::Degraded(s) => s,
        };
        let plan = self.plan(req, strategy)?;
        let graph = build_flow(&plan)?.deliver_to(NodeId::REQUESTOR);
        let now = self.now();
        {
            let mut st = self.state.lock().unwrap();
            for (node, b) in flow_byte_summary(&graph) {
                if node != NodeId::REQUESTOR {
                    st.load.record_request(node, b.ingress + b.egress, now);
                }
            }
        }
        let addr = |n: NodeId| m.addr_of(n.0).unwrap_or_default().to_owned();
        let command = plan.sub_request_commands(addr).swap_remove(0);
        let starter_addr = if plan.starter == NodeId::REQUESTOR { req.reply_addr.clone() } else { addr(plan.starter) };
        Ok(ReadResponse::Plan(CommandEnvelope {
            read_id,
            stripe: req.stripe,
            starter: plan.starter,
            starter_addr,
            requestor_addr: req.reply_addr.clone(),
            command,
        }))
    }

    fn plan(&self, req: &ReadRequest, strategy: Strategy) -> Result<ReconstructionPlan> {
        let m = &self.manifest;
        let params = m.params()?;
        let n = params.n() as u32;
        let available: Vec<Agent> = (0..n)
            .filter(|&c| c != req.chunk && !m.chunk_unavailable(req.stripe, c))
            .map(|c| Agent { node: NodeId(m.holder(req.stripe, c).unwrap()), chunk: c as usize })
            .collect();
        let hosts: Vec<u32> = (0..n).filter_map(|c| m.holder(req.stripe, c)).collect();
        let mut candidates: Vec<NodeId> = m
            .helpers
            .iter()
            .filter(|h| !hosts.contains(&h.id) && !m.helper_down(h.id))
            .map(|h| NodeId(h.id))
            .collect();
        if candidates.is_empty() {
            candidates.push(NodeId::REQUESTOR);
        }
        let preq = PlanRequest {
            params,
            lost: req.chunk as usize,
            available: &available,
            strategy,
            max_agents: (req.max_agents > 0).then_some(req.max_agents as usize),
            starter_candidates: &candidates,
        };
        let now = self.now();
        let mut st = self.state.lock().unwrap();
        let State { load, rng } = &mut *st;
        build_plan(&preq, &self.generator, load, now, rng).map_err(|e| match e {
            CoreError::Unrecoverable { k, have } => {
                ClusterError::Remote(format!("unrecoverable: {have} surviving chunks, need {k}"))
            }
            e => e.into(),
        })
    }

    fn serve_conn(&self, stream: TcpStream) {
        let Ok(mut w) = stream.try_clone() else { return };
        let mut r = std::io::BufReader::new(stream);
        loop {
            match wire::recv(&mut r) {
                Ok(Some(Message::ReadReq(req))) => {
                    let resp = self.handle(&req);
                    if let ReadResponse::Error(e) = &resp {
                        info!("read {}:{} refused: {e}", req.stripe, req.chunk);
                    }
                    if wire::send(&mut w, &Message::ReadResp(resp)).is_err() {
                        break;
                    }
                }
                Ok(Some(other)) => {
                    warn!("coordinator: unexpected {:?} frame", other.kind());
                    break;
                }
                Ok(None) => break,
                Err(e) => {
                    warn!("coordinator: dropping connection: {e}");
                    break;
                }
            }
        }
    }
}

pub fn spawn_coordinator(coordinator: Arc<Coordinator>, listener: TcpListener) -> Result<ServerHandle> {
    spawn_accept(listener, "coordinator", move |s| coordinator.serve_conn(s))
}

/// Binds the manifest's coordinator address and serves until the process
/// exits.
pub fn coordinator_serve(manifest: Manifest, seed: u64) -> Result<()> {
    let listener = TcpListener::bind(&manifest.coordinator)?;
    info!("coordinator listening on {}", manifest.coordinator);
    let c = Arc::new(Coordinator::new(manifest, seed)?);
    let _h = spawn_coordinator(c, listener)?;
    loop {
        thread::park();
    }
}
