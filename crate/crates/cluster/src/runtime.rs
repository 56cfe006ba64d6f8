//! Per-read sessions and the step executor shared by helpers and the
//! requestor.

use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use apls_core::gf::{mul_add_slice, Gf256};
use apls_core::strategy::{DataFlowGraph, NodeBytes, Operand, PayloadInfo, StepKind};
use apls_core::NodeId;
use log::{debug, warn};

use crate::throttle::{Throttle, ThrottledReader, ThrottledWriter};
use crate::wire::{self, CommandEnvelope, PacketFrame};
use crate::{ClusterError, Result};

/// Packet payload bytes moved through a node.
#[derive(Debug, Default)]
pub struct Counters {
    ingress: AtomicU64,
    egress: AtomicU64,
}

impl Counters {
    pub fn snapshot(&self) -> NodeBytes {
        NodeBytes { ingress: self.ingress.load(Ordering::Relaxed), egress: self.egress.load(Ordering::Relaxed) }
    }

    pub fn reset(&self) {
        self.ingress.store(0, Ordering::Relaxed);
        self.egress.store(0, Ordering::Relaxed);
    }
}

#[derive(Clone, Copy)]
enum Input {
    Local(usize),
    Payload(PayloadInfo),
}

struct Job {
    inputs: Vec<(Input, Gf256)>,
    out: PayloadInfo,
}

struct Jobs {
    list: Vec<Job>,
    waiting: HashMap<PayloadInfo, Vec<usize>>,
    pending: Vec<usize>,
    local: Option<Arc<Vec<u8>>>,
    packet_size: usize,
}

#[derive(Default)]
struct SessionState {
    have: HashMap<PayloadInfo, Arc<Vec<u8>>>,
    jobs: Option<Jobs>,
    error: Option<String>,
    watchers: HashMap<PayloadInfo, Vec<SyncSender<()>>>,
}

impl SessionState {
    fn wake(&mut self, key: &PayloadInfo) {
        for w in self.watchers.remove(key).unwrap_or_default() {
            let _ = w.try_send(());
        }
    }
}

/// Payloads available at this node for one read.
#[derive(Default)]
pub(crate) struct Session {
    state: Mutex<SessionState>,
}

type Ready = Vec<(PayloadInfo, usize, Vec<(Arc<Vec<u8>>, usize, Gf256)>)>;

impl Session {
    fn take_ready(st: &mut SessionState, idx: Vec<usize>) -> Ready {
        if idx.is_empty() {
            return Vec::new();
        }
        let jobs = st.jobs.as_ref().expect("jobs installed");
        let ps = jobs.packet_size;
        idx.into_iter()
            .map(|i| {
                let job = &jobs.list[i];
                let inputs = job
                    .inputs
                    .iter()
                    .map(|(inp, g)| match inp {
                        Input::Local(p) => (jobs.local.clone().expect("local chunk loaded"), p * ps, *g),
                        Input::Payload(k) => (st.have[k].clone(), 0, *g),
                    })
                    .collect();
                (job.out, ps, inputs)
            })
            .collect()
    }

    /// Stores a payload and runs every compute it unblocks.
    pub fn insert(&self, key: PayloadInfo, data: Arc<Vec<u8>>) {
        let mut work = vec![(key, data)];
        while let Some((key, data)) = work.pop() {
            let ready = {
                let mut st = self.state.lock().unwrap();
                if st.have.insert(key, data).is_some() {
                    continue;
                }
                let mut unblocked = Vec::new();
                if let Some(jobs) = st.jobs.as_mut() {
                    for &j in jobs.waiting.get(&key).map(Vec::as_slice).unwrap_or(&[]) {
                        jobs.pending[j] -= 1;
                        if jobs.pending[j] == 0 {
                            unblocked.push(j);
                        }
                    }
                }
                st.wake(&key);
                Session::take_ready(&mut st, unblocked)
            };
            work.extend(ready.into_iter().map(|(out, ps, inputs)| (out, Arc::new(combine(&inputs, ps)))));
        }
    }

    fn install(&self, jobs: Jobs) {
        let ready = {
            let mut st = self.state.lock().unwrap();
            let mut jobs = jobs;
            let mut ready = Vec::new();
            for (i, job) in jobs.list.iter().enumerate() {
                let missing = job
                    .inputs
                    .iter()
                    .filter(|(inp, _)| matches!(inp, Input::Payload(k) if !st.have.contains_key(k)))
                    .count();
                jobs.pending[i] = missing;
                if missing == 0 {
                    ready.push(i);
                }
            }
            st.jobs = Some(jobs);
            Session::take_ready(&mut st, ready)
        };
        for (out, ps, inputs) in ready {
            self.insert(out, Arc::new(combine(&inputs, ps)));
        }
    }

    pub fn fail(&self, msg: String) {
        let mut st = self.state.lock().unwrap();
        st.error.get_or_insert(msg);
        for (_, ws) in st.watchers.drain() {
            for w in ws {
                let _ = w.try_send(());
            }
        }
    }

    pub fn wait_for(&self, key: PayloadInfo, deadline: Instant, timeout: f64) -> Result<Arc<Vec<u8>>> {
        loop {
            let rx = {
                let mut st = self.state.lock().unwrap();
                if let Some(e) = &st.error {
                    return Err(ClusterError::Remote(e.clone()));
                }
                if let Some(d) = st.have.get(&key) {
                    return Ok(d.clone());
                }
                let (tx, rx) = sync_channel(1);
                st.watchers.entry(key).or_default().push(tx);
                rx
            };
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() || rx.recv_timeout(left).is_err() && Instant::now() >= deadline {
                let st = self.state.lock().unwrap();
                if let Some(e) = &st.error {
                    return Err(ClusterError::Remote(e.clone()));
                }
                return st.have.get(&key).cloned().ok_or(ClusterError::Timeout(timeout));
            }
        }
    }
}

fn combine(inputs: &[(Arc<Vec<u8>>, usize, Gf256)], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    for (d, off, g) in inputs {
        mul_add_slice(*g, &d[*off..*off + len], &mut out);
    }
    out
}

/// State shared by every connection of one node.
pub(crate) struct Endpoint {
    pub me: NodeId,
    pub up: Arc<Throttle>,
    pub down: Arc<Throttle>,
    pub counters: Arc<Counters>,
    pub timeout: f64,
    sessions: Mutex<HashMap<u64, Arc<Session>>>,
}

impl Endpoint {
    pub fn new(me: NodeId, up: Throttle, down: Throttle, timeout: f64) -> Endpoint {
        Endpoint {
            me,
            up: Arc::new(up),
            down: Arc::new(down),
            counters: Arc::new(Counters::default()),
            timeout,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn session(&self, read_id: u64) -> Arc<Session> {
        self.sessions.lock().unwrap().entry(read_id).or_default().clone()
    }

    pub fn drop_session(&self, read_id: u64) {
        self.sessions.lock().unwrap().remove(&read_id);
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn reader(&self, s: TcpStream) -> BufReader<ThrottledReader<TcpStream>> {
        BufReader::with_capacity(256 * 1024, ThrottledReader::new(s, self.down.clone()))
    }

    pub fn writer(&self, s: TcpStream) -> ThrottledWriter<TcpStream> {
        ThrottledWriter::new(s, self.up.clone())
    }

    pub fn counters_add_egress(&self, bytes: usize) {
        self.counters.egress.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn counters_add_ingress(&self, bytes: usize) {
        self.counters.ingress.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    /// Records an arriving packet.
    pub fn accept_packet(&self, p: PacketFrame) {
        self.counters.ingress.fetch_add(p.data.len() as u64, Ordering::Relaxed);
        self.session(p.read_id).insert(p.key, Arc::new(p.data));
    }

    /// Executes this node's compute and transfer steps of `graph`.
    pub fn run_role(
        &self,
        env: &CommandEnvelope,
        graph: &DataFlowGraph,
        local: Option<Arc<Vec<u8>>>,
        session: &Arc<Session>,
    ) -> Result<()> {
        let me = self.me;
        let mut list = Vec::new();
        let mut sends: HashMap<NodeId, Vec<PayloadInfo>> = HashMap::new();
        for step in &graph.steps {
            match &step.kind {
                StepKind::Compute(c) if c.node == me => {
                    let inputs = c
                        .inputs
                        .iter()
                        .map(|(op, g)| match *op {
                            Operand::Local { packet, .. } => (Input::Local(packet), *g),
                            Operand::Payload(p) => (Input::Payload(graph.payloads[p]), *g),
                        })
                        .collect();
                    list.push(Job { inputs, out: graph.payloads[c.output] });
                }
                StepKind::Transfer(t) if t.src == me => {
                    sends.entry(t.dst).or_default().push(graph.payloads[t.payload]);
                }
                _ => {}
            }
        }
        if local.is_none() && list.iter().any(|j| j.inputs.iter().any(|(i, _)| matches!(i, Input::Local(_)))) {
            return Err(ClusterError::Protocol(format!("node {me} has no local chunk for its steps")));
        }
        let mut waiting: HashMap<PayloadInfo, Vec<usize>> = HashMap::new();
        for (i, j) in list.iter().enumerate() {
            for (inp, _) in &j.inputs {
                if let Input::Payload(k) = inp {
                    waiting.entry(*k).or_default().push(i);
                }
            }
        }
        let pending = vec![0; list.len()];
        session.install(Jobs { list, waiting, pending, local, packet_size: graph.packet_size });

        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout);
        thread::scope(|scope| {
            let handles: Vec<_> = sends
                .into_iter()
                .map(|(dst, keys)| {
                    let addr = env
                        .addr_of(dst)
                        .ok_or_else(|| ClusterError::Protocol(format!("no address for node {dst}")))
                        .map(str::to_owned);
                    scope.spawn(move || -> Result<()> {
                        let addr = addr?;
                        let stream = TcpStream::connect(&addr)?;
                        stream.set_nodelay(true)?;
                        let mut w = self.writer(stream);
                        for key in keys {
                            let data = session.wait_for(key, deadline, self.timeout)?;
                            wire::send_packet(&mut w, env.read_id, key, &data)?;
                            self.counters.egress.fetch_add(data.len() as u64, Ordering::Relaxed);
                        }
                        w.flush()?;
                        let _ = w.get_ref().shutdown(Shutdown::Write);
                        Ok(())
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(ClusterError::Protocol("sender panicked".into()))))
                .collect::<Result<Vec<()>>>()
        })?;
        Ok(())
    }
}

/// Background accept loop; dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
    }
}

pub(crate) fn spawn_accept<F>(listener: TcpListener, name: &str, handler: F) -> Result<ServerHandle>
where
    F: Fn(TcpStream) + Send + Sync + 'static,
{
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handler = Arc::new(handler);
    thread::Builder::new().name(format!("{name}-accept")).spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(s) => {
                    let h = handler.clone();
                    thread::spawn(move || h(s));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        debug!("accept loop on {addr} stopped");
    })?;
    Ok(ServerHandle { addr, stop })
}
