//! Requestor client: asks the coordinator, then either reads directly from
//! the hosting helper or drives a reconstruction and reassembles it.

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use apls_core::strategy::{build_flow, PayloadInfo, Strategy};
use apls_core::NodeId;
use log::warn;

use crate::manifest::Manifest;
use crate::runtime::{spawn_accept, Counters, Endpoint, ServerHandle};
use crate::throttle::Throttle;
use crate::wire::{self, CommandEnvelope, Message, ReadMode, ReadRequest, ReadResponse};
use crate::{ClusterError, Result};

#[derive(Debug, Clone)]
pub struct ReadOutcome {
    pub read_id: u64,
    pub data: Vec<u8>,
    /// Request sent to last byte assembled.
    pub latency: Duration,
    pub coordinator_rtt: Duration,
    /// `None` for a direct read.
    pub strategy: Option<Strategy>,
    pub starter: Option<NodeId>,
    pub agents: usize,
}

pub struct Requestor {
    manifest: Arc<Manifest>,
    ep: Arc<Endpoint>,
    addr: String,
    _server: ServerHandle,
}

impl Requestor {
    /// Listens on an ephemeral loopback port for reconstructed packets.
    pub fn start(manifest: Arc<Manifest>) -> Result<Requestor> {
        Requestor::start_on(manifest, "127.0.0.1:0")
    }

    pub fn start_on(manifest: Arc<Manifest>, bind: &str) -> Result<Requestor> {
        let up = Throttle::with_rate(manifest.requestor.up_bw);
        let down = Throttle::with_rate(manifest.requestor.down_bw);
        let ep = Arc::new(Endpoint::new(NodeId::REQUESTOR, up, down, manifest.timeout_secs));
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?.to_string();
        let e = ep.clone();
        let server = spawn_accept(listener, "requestor", move |s| receive(&e, s))?;
        Ok(Requestor { manifest, ep, addr, _server: server })
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn counters(&self) -> Arc<Counters> {
        self.ep.counters.clone()
    }

    pub fn read(&self, stripe: u32, chunk: u32, mode: ReadMode) -> Result<ReadOutcome> {
        self.read_with(stripe, chunk, mode, 0)
    }

    /// `max_agents` caps the agent count of all-survivor strategies; 0
    /// leaves it to the coordinator.
    pub fn read_with(&self, stripe: u32, chunk: u32, mode: ReadMode, max_agents: u32) -> Result<ReadOutcome> {
        let t0 = Instant::now();
        let mut conn = TcpStream::connect(&self.manifest.coordinator)?;
        conn.set_nodelay(true)?;
        let req = ReadRequest { read_id: 0, stripe, chunk, mode, max_agents, reply_addr: self.addr.clone() };
        wire::send(&mut conn, &Message::ReadReq(req))?;
        let resp = match wire::recv(&mut conn)? {
            Some(Message::ReadResp(r)) => r,
            Some(other) => return Err(ClusterError::Protocol(format!("expected response, got {:?}", other.kind()))),
            None => return Err(ClusterError::Protocol("coordinator closed the connection".into())),
        };
        drop(conn);
        let rtt = t0.elapsed();
        let mut out = match resp {
            ReadResponse::Error(e) => return Err(ClusterError::Remote(e)),
            ReadResponse::Redirect { read_id, node, addr } => self.direct(read_id, stripe, chunk, node, &addr)?,
            ReadResponse::Plan(env) => self.reconstruct(env)?,
        };
        out.latency = t0.elapsed();
        out.coordinator_rtt = rtt;
        Ok(out)
    }

    fn direct(&self, read_id: u64, stripe: u32, chunk: u32, node: NodeId, addr: &str) -> Result<ReadOutcome> {
        let m = &self.manifest;
        let (cs, ps) = (m.code.chunk_size, m.code.packet_size);
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs_f64(m.timeout_secs)))?;
        let mut w = stream.try_clone()?;
        let req = ReadRequest { read_id, stripe, chunk, mode: ReadMode::Auto, max_agents: 0, reply_addr: String::new() };
        wire::send(&mut w, &Message::ReadReq(req))?;
        w.flush()?;
        let mut r = self.ep.reader(stream);
        let mut data = vec![0u8; cs];
        let mut got = vec![false; cs / ps];
        loop {
            match wire::recv(&mut r).map_err(timeout_as(m.timeout_secs))? {
                Some(Message::Packet(p)) if p.read_id == read_id => {
                    let i = p.key.packet as usize;
                    if i >= got.len() || p.data.len() != ps {
                        return Err(ClusterError::Protocol(format!("bad packet {i} from {node}")));
                    }
                    self.ep.counters_add_ingress(ps);
                    data[i * ps..(i + 1) * ps].copy_from_slice(&p.data);
                    got[i] = true;
                }
                Some(Message::Done { .. }) => break,
                Some(Message::Error { message, .. }) => return Err(ClusterError::Remote(message)),
                Some(other) => return Err(ClusterError::Protocol(format!("unexpected {:?}", other.kind()))),
                None => return Err(ClusterError::Protocol(format!("{node} closed before finishing"))),
            }
        }
        if got.iter().any(|g| !g) {
            return Err(ClusterError::Protocol(format!("{node} skipped packets")));
        }
        Ok(ReadOutcome {
            read_id,
            data,
            latency: Duration::ZERO,
            coordinator_rtt: Duration::ZERO,
            strategy: None,
            starter: Some(node),
            agents: 1,
        })
    }

    fn reconstruct(&self, env: CommandEnvelope) -> Result<ReadOutcome> {
        let id = env.read_id;
        let session = self.ep.session(id);
        let result = (|| {
            let generator = env.command.code_params()?.generator()?;
            let plan = env.command.to_plan(&generator, env.starter)?;
            let graph = build_flow(&plan)?.deliver_to(NodeId::REQUESTOR);
            let mut targets: Vec<NodeId> = graph.nodes().into_iter().filter(|n| *n != NodeId::REQUESTOR).collect();
            targets.dedup();
            for node in targets {
                let addr = env
                    .addr_of(node)
                    .ok_or_else(|| ClusterError::Protocol(format!("no address for node {node}")))?;
                let mut s = TcpStream::connect(addr)?;
                s.set_nodelay(true)?;
                wire::send(&mut s, &Message::SubreqCmd(env.clone()))?;
            }
            let ep = self.ep.clone();
            let (env2, graph2, sess2) = (env.clone(), graph.clone(), session.clone());
            let role = thread::spawn(move || ep.run_role(&env2, &graph2, None, &sess2));

            let timeout = self.manifest.timeout_secs;
            let deadline = Instant::now() + Duration::from_secs_f64(timeout);
            let ps = graph.packet_size;
            let mut data = Vec::with_capacity(graph.outputs.len() * ps);
            for (i, &out) in graph.outputs.iter().enumerate() {
                let key: PayloadInfo = graph.payloads[out];
                let p = session.wait_for(key, deadline, timeout)?;
                if p.len() != ps {
                    return Err(ClusterError::Protocol(format!("packet {i} has {} bytes", p.len())));
                }
                data.extend_from_slice(&p);
            }
            role.join().map_err(|_| ClusterError::Protocol("requestor role panicked".into()))??;
            if data.len() != plan.params.chunk_size {
                return Err(ClusterError::Protocol("reassembled length mismatch".into()));
            }
            Ok(ReadOutcome {
                read_id: id,
                data,
                latency: Duration::ZERO,
                coordinator_rtt: Duration::ZERO,
                strategy: Some(plan.strategy),
                starter: Some(plan.starter),
                agents: plan.q(),
            })
        })();
        self.ep.drop_session(id);
        result
    }
}

fn timeout_as(secs: f64) -> impl Fn(wire::WireError) -> ClusterError {
    move |e| match e {
        wire::WireError::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
            ClusterError::Timeout(secs)
        }
        e => e.into(),
    }
}

fn receive(ep: &Endpoint, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let mut r = ep.reader(stream);
    loop {
        match wire::recv(&mut r) {
            Ok(Some(Message::Packet(p))) => ep.accept_packet(p),
            Ok(Some(Message::Error { read_id, message })) => ep.session(read_id).fail(message),
            Ok(Some(Message::Done { .. })) => {}
            Ok(Some(other)) => {
                warn!("requestor: unexpected {:?} frame", other.kind());
                break;
            }
            Ok(None) => break,
            Err(e) => {
                warn!("requestor: dropping connection: {e}");
                break;
            }
        }
    }
}

/// One-shot read with a temporary requestor.
pub fn requestor_read(manifest: Manifest, stripe: u32, chunk: u32, mode: ReadMode) -> Result<ReadOutcome> {
    Requestor::start(Arc::new(manifest))?.read(stripe, chunk, mode)
}
