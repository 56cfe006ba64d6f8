//! Helper daemon: serves direct chunk reads and executes its share of
//! reconstruction data flows.

use std::fs;
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use apls_core::strategy::{build_flow, PayloadInfo};
use apls_core::NodeId;
use log::{debug, info, warn};

use crate::manifest::Manifest;
use crate::runtime::{spawn_accept, Counters, Endpoint, ServerHandle};
use crate::throttle::Throttle;
use crate::wire::{self, CommandEnvelope, Message, ReadRequest};
use crate::{ClusterError, Result};

struct Helper {
    manifest: Arc<Manifest>,
    ep: Endpoint,
}

pub struct HelperHandle {
    pub id: u32,
    pub counters: Arc<Counters>,
    helper: Arc<Helper>,
    server: ServerHandle,
}

impl HelperHandle {
    pub fn addr(&self) -> std::net::SocketAddr {
        self.server.addr()
    }

    /// Reads still holding state on this helper.
    pub fn open_sessions(&self) -> usize {
        self.helper.ep.session_count()
    }
}

/// Rates default to the manifest entry for `id`.
pub fn spawn_helper(
    manifest: Arc<Manifest>,
    id: u32,
    listener: TcpListener,
    up_bw: Option<f64>,
    down_bw: Option<f64>,
) -> Result<HelperHandle> {
    let spec = manifest.helper(id).ok_or_else(|| ClusterError::Manifest(format!("no helper {id}")))?;
    let up = Throttle::with_rate(up_bw.or(spec.up_bw));
    let down = Throttle::with_rate(down_bw.or(spec.down_bw));
    let timeout = manifest.timeout_secs;
    let helper = Arc::new(Helper { manifest, ep: Endpoint::new(NodeId(id), up, down, timeout) });
    let h = helper.clone();
    let server = spawn_accept(listener, &format!("helper{id}"), move |s| h.handle(s))?;
    Ok(HelperHandle { id, counters: helper.ep.counters.clone(), helper, server })
}

/// Binds the manifest address of helper `id` and serves until the process
/// exits.
pub fn helper_serve(manifest: Manifest, id: u32, up_bw: Option<f64>, down_bw: Option<f64>) -> Result<()> {
    let addr = manifest.addr_of(id).ok_or_else(|| ClusterError::Manifest(format!("no helper {id}")))?.to_owned();
    let listener = TcpListener::bind(&addr)?;
    info!("helper {id} listening on {addr}");
    let _h = spawn_helper(Arc::new(manifest), id, listener, up_bw, down_bw)?;
    loop {
        thread::park();
    }
}

impl Helper {
    fn handle(self: &Arc<Self>, stream: TcpStream) {
        let _ = stream.set_nodelay(true);
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        let Ok(clone) = stream.try_clone() else { return };
        let mut r = self.ep.reader(clone);
        loop {
            let msg = match wire::recv(&mut r) {
                Ok(Some(m)) => m,
                Ok(None) => break,
                Err(e) => {
                    warn!("helper {}: dropping connection from {peer}: {e}", self.ep.me);
                    break;
                }
            };
            match msg {
                Message::Packet(p) => self.ep.accept_packet(p),
                Message::SubreqCmd(env) => {
                    let me = self.clone();
                    thread::spawn(move || me.run_command(env));
                }
                Message::ReadReq(req) => {
                    let Ok(s) = stream.try_clone() else { break };
                    if let Err(e) = self.serve_read(&req, s) {
                        warn!("helper {}: direct read failed: {e}", self.ep.me);
                    }
                }
                Message::Error { read_id, message } => self.ep.session(read_id).fail(message),
                Message::Done { .. } => {}
                Message::ReadResp(_) => {
                    warn!("helper {}: unexpected response from {peer}", self.ep.me);
                    break;
                }
            }
        }
        let _ = stream.shutdown(std::net::Shutdown::Both);
    }

    fn serve_read(&self, req: &ReadRequest, stream: TcpStream) -> Result<()> {
        let mut w = self.ep.writer(stream);
        let m = &self.manifest;
        let path = m.chunk_path(self.ep.me.0, req.stripe, req.chunk);
        let data = match fs::read(&path) {
            Ok(d) => d,
            Err(e) => {
                let message = format!("helper {} cannot read {}: {e}", self.ep.me, path.display());
                wire::send(&mut w, &Message::Error { read_id: req.read_id, message })?;
                return Ok(());
            }
        };
        let ps = m.code.packet_size;
        for (i, p) in data.chunks(ps).enumerate() {
            let key = PayloadInfo { list: 0, packet: i as u32, stage: 0 };
            wire::send_packet(&mut w, req.read_id, key, p)?;
            self.ep.counters_add_egress(p.len());
        }
        wire::send(&mut w, &Message::Done { read_id: req.read_id })?;
        w.flush()?;
        Ok(())
    }

    fn run_command(&self, env: CommandEnvelope) {
        let id = env.read_id;
        debug!("helper {}: read {id} command", self.ep.me);
        let session = self.ep.session(id);
        let result = (|| -> Result<()> {
            let generator = env.command.code_params()?.generator()?;
            let plan = env.command.to_plan(&generator, env.starter)?;
            let graph = build_flow(&plan)?.deliver_to(NodeId::REQUESTOR);
            let local = match plan.agents.iter().find(|a| a.node == self.ep.me) {
                Some(a) => {
                    let path = self.manifest.chunk_path(self.ep.me.0, env.stripe, a.chunk as u32);
                    let data = fs::read(&path).map_err(|e| {
                        ClusterError::Remote(format!("helper {} cannot read {}: {e}", self.ep.me, path.display()))
                    })?;
                    if data.len() != plan.params.chunk_size {
                        return Err(ClusterError::Remote(format!("{} has wrong length", path.display())));
                    }
                    Some(Arc::new(data))
                }
                None => None,
            };
            self.ep.run_role(&env, &graph, local, &session)
        })();
        if let Err(e) = result {
            warn!("helper {}: read {id} failed: {e}", self.ep.me);
            session.fail(e.to_string());
            let message = format!("helper {}: {e}", self.ep.me);
            if let Ok(mut s) = TcpStream::connect(&env.requestor_addr) {
                let _ = wire::send(&mut s, &Message::Error { read_id: id, message });
            }
        }
        self.ep.drop_session(id);
    }
}
