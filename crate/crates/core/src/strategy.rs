//! Compiles a [`ReconstructionPlan`] into a [`DataFlowGraph`]: which node
//! sends which packet-sized payload to whom, what is computed where, and in
//! which order.
//!
//! Every payload is one packet long. Local chunk reads are compute inputs;
//! only network moves are transfer steps. Steps are numbered in a
//! topological order, and transfers on the same (src, dst) connection are
//! chained so that each connection is a FIFO.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gf::{mul_add_slice, Gf256};
use crate::plan::ReconstructionPlan;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// k-1 sources send whole chunks to a source acting as starter.
    Traditional,
    /// Partial-parallel repair: binary aggregation tree over k sources.
    Ppr,
    /// Repair pipelining over a chain of k sources ending at the starter.
    EcPipe,
    /// Repair pipelining whose chains end at k-1 different helpers that all
    /// forward to an external starter.
    EcPipeB,
    /// All survivors; list members send raw slices to the list aggregator.
    AplsParallel,
    /// All survivors; each list is a pipelined chain of partial sums.
    AplsPipelined,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Traditional,
        Strategy::Ppr,
        Strategy::EcPipe,
        Strategy::EcPipeB,
        Strategy::AplsParallel,
        Strategy::AplsPipelined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Traditional => "traditional",
            Strategy::Ppr => "ppr",
            Strategy::EcPipe => "ecpipe",
            Strategy::EcPipeB => "ecpipe-b",
            Strategy::AplsParallel => "apls-parallel",
            Strategy::AplsPipelined => "apls-pipelined",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Strategy::Traditional => 0,
            Strategy::Ppr => 1,
            Strategy::EcPipe => 2,
            Strategy::EcPipeB => 3,
            Strategy::AplsParallel => 4,
            Strategy::AplsPipelined => 5,
        }
    }

    pub fn from_code(c: u8) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|s| s.code() == c)
            .ok_or_else(|| Error::UnknownStrategy(format!("code {c}")))
    }

    pub fn uses_all_survivors(self) -> bool {
        matches!(self, Strategy::AplsParallel | Strategy::AplsPipelined)
    }

    /// The starter is a node outside the source set.
    pub fn external_starter(self) -> bool {
        matches!(self, Strategy::AplsParallel | Strategy::AplsPipelined | Strategy::EcPipeB)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let found = match s.as_str() {
            "apls" => Some(Strategy::AplsPipelined),
            "ec-a" | "ecpipe-a" => Some(Strategy::EcPipe),
            "ec-b" => Some(Strategy::EcPipeB),
            _ => Strategy::ALL.into_iter().find(|x| x.name() == s),
        };
        found.ok_or(Error::UnknownStrategy(s))
    }
}

pub type StepId = usize;
pub type PayloadId = usize;

/// Identity of a packet-sized buffer. `(list, packet, stage)` is unique
/// within a graph; `stage` numbers the payloads of one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PayloadInfo {
    pub list: u32,
    pub packet: u32,
    pub stage: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    /// Packet `packet` of the locally stored chunk `chunk`.
    Local { chunk: usize, packet: usize },
    Payload(PayloadId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeStep {
    pub node: NodeId,
    pub inputs: Vec<(Operand, Gf256)>,
    pub output: PayloadId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferStep {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: PayloadId,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepKind {
    Transfer(TransferStep),
    Compute(ComputeStep),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub kind: StepKind,
    pub deps: Vec<StepId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFlowGraph {
    pub packet_size: usize,
    pub starter: NodeId,
    /// Where the finished packets end up: the starter, or a node the
    /// starter relays to.
    pub sink: NodeId,
    pub steps: Vec<Step>,
    pub payloads: Vec<PayloadInfo>,
    /// Payload holding packet `i` of the reconstructed chunk at `sink`.
    pub outputs: Vec<PayloadId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeBytes {
    pub ingress: u64,
    pub egress: u64,
}

impl DataFlowGraph {
    pub fn transfers(&self) -> impl Iterator<Item = (StepId, &TransferStep)> {
        self.steps.iter().enumerate().filter_map(|(i, s)| match &s.kind {
            StepKind::Transfer(t) => Some((i, t)),
            _ => None,
        })
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .steps
            .iter()
            .flat_map(|s| match &s.kind {
                StepKind::Transfer(t) => vec![t.src, t.dst],
                StepKind::Compute(c) => vec![c.node],
            })
            .chain([self.starter, self.sink])
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn payload_index(&self) -> HashMap<PayloadInfo, PayloadId> {
        self.payloads.iter().enumerate().map(|(i, p)| (*p, i)).collect()
    }

    /// Checks dependency references and acyclicity (Kahn).
    pub fn validate(&self) -> Result<()> {
        let n = self.steps.len();
        let mut indeg = vec![0usize; n];
        let mut users: Vec<Vec<StepId>> = vec![Vec::new(); n];
        for (i, s) in self.steps.iter().enumerate() {
            for &d in &s.deps {
                if d >= n {
                    return Err(Error::Graph(format!("step {i} depends on missing step {d}")));
                }
                indeg[i] += 1;
                users[d].push(i);
            }
            let payload_ok = |p: PayloadId| p < self.payloads.len();
            let ok = match &s.kind {
                StepKind::Transfer(t) => payload_ok(t.payload) && t.bytes > 0 && t.src != t.dst,
                StepKind::Compute(c) => {
                    payload_ok(c.output)
                        && c.inputs.iter().all(|(o, _)| match o {
                            Operand::Payload(p) => payload_ok(*p),
                            Operand::Local { .. } => true,
                        })
                }
            };
            if !ok {
                return Err(Error::Graph(format!("step {i} is malformed")));
            }
        }
        let mut ready: VecDeque<StepId> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(s) = ready.pop_front() {
            seen += 1;
            for &u in &users[s] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    ready.push_back(u);
                }
            }
        }
        if seen != n {
            return Err(Error::Graph("dependency cycle".into()));
        }
        if self.outputs.iter().any(|&p| p >= self.payloads.len()) {
            return Err(Error::Graph("output refers to missing payload".into()));
        }
        Ok(())
    }

    /// Number of network hops on the longest path ending in packet `i`'s
    /// output.
    pub fn packet_depth(&self, packet: usize) -> usize {
        let mut producer: HashMap<(NodeId, PayloadId), StepId> = HashMap::new();
        let mut depth = vec![0usize; self.steps.len()];
        for (i, s) in self.steps.iter().enumerate() {
            depth[i] = match &s.kind {
                StepKind::Transfer(t) => {
                    producer.insert((t.dst, t.payload), i);
                    1 + producer.get(&(t.src, t.payload)).map_or(0, |&p| depth[p])
                }
                StepKind::Compute(c) => {
                    producer.insert((c.node, c.output), i);
                    c.inputs
                        .iter()
                        .filter_map(|(o, _)| match o {
                            Operand::Payload(p) => producer.get(&(c.node, *p)).map(|&s| depth[s]),
                            Operand::Local { .. } => None,
                        })
                        .max()
                        .unwrap_or(0)
                }
            };
        }
        producer.get(&(self.sink, self.outputs[packet])).map_or(0, |&s| depth[s])
    }

    /// Relays every finished packet from the starter to `sink`.
    pub fn deliver_to(mut self, sink: NodeId) -> DataFlowGraph {
        if sink == self.sink {
            return self;
        }
        let mut b = Builder::resume(&self);
        let from = self.sink;
        for &out in &self.outputs {
            b.transfer(from, sink, out);
        }
        self.steps = b.steps;
        self.sink = sink;
        self
    }

    /// Text dump, one line per step.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "graph packet_size={} starter={} sink={} payloads={} steps={}",
            self.packet_size,
            self.starter,
            self.sink,
            self.payloads.len(),
            self.steps.len()
        );
        for (i, p) in self.payloads.iter().enumerate() {
            let _ = writeln!(s, "P {i} {} {} {}", p.list, p.packet, p.stage);
        }
        for (i, st) in self.steps.iter().enumerate() {
            let deps = join(st.deps.iter());
            match &st.kind {
                StepKind::Transfer(t) => {
                    let _ = writeln!(
                        s,
                        "T {i} {} {} {} {} deps={deps}",
                        t.src, t.dst, t.payload, t.bytes
                    );
                }
                StepKind::Compute(c) => {
                    let ins = join(c.inputs.iter().map(|(o, g)| match o {
                        Operand::Local { chunk, packet } => format!("L{chunk}.{packet}*{:02x}", g.0),
                        Operand::Payload(p) => format!("P{p}*{:02x}", g.0),
                    }));
                    let _ = writeln!(s, "C {i} {} {} in={ins} deps={deps}", c.node, c.output);
                }
            }
        }
        let _ = writeln!(s, "O {}", join(self.outputs.iter()));
        s
    }

    pub fn from_text(text: &str) -> Result<DataFlowGraph> {
        let bad = |l: &str| Error::Graph(format!("cannot parse `{l}`"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad(""))?;
        let kv: HashMap<&str, &str> =
            header.split_whitespace().skip(1).filter_map(|t| t.split_once('=')).collect();
        let field = |k: &str| kv.get(k).copied().ok_or_else(|| bad(header));
        let packet_size = field("packet_size")?.parse().map_err(|_| bad(header))?;
        let starter = field("starter")?.parse()?;
        let sink = field("sink")?.parse()?;
        let mut g = DataFlowGraph {
            packet_size,
            starter,
            sink,
            steps: Vec::new(),
            payloads: Vec::new(),
            outputs: Vec::new(),
        };
        for line in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<usize> {
                tok.get(i).and_then(|t| t.parse().ok()).ok_or_else(|| bad(line))
            };
            let node = |i: usize| -> Result<NodeId> { tok.get(i).ok_or_else(|| bad(line))?.parse() };
            let list_of = |t: &str, prefix: &str| -> Result<Vec<String>> {
                let rest = t.strip_prefix(prefix).ok_or_else(|| bad(line))?;
                Ok(rest.split(',').filter(|x| !x.is_empty()).map(str::to_string).collect())
            };
            match tok.first().copied() {
                Some("P") => {
                    if num(1)? != g.payloads.len() {
                        return Err(bad(line));
                    }
                    g.payloads.push(PayloadInfo {
                        list: num(2)? as u32,
                        packet: num(3)? as u32,
                        stage: num(4)? as u32,
                    });
                }
                Some("T") | Some("C") => {
                    if num(1)? != g.steps.len() {
                        return Err(bad(line));
                    }
                    let deps = list_of(tok.last().ok_or_else(|| bad(line))?, "deps=")?
                        .iter()
                        .map(|d| d.parse().map_err(|_| bad(line)))
                        .collect::<Result<Vec<_>>>()?;
                    let kind = if tok[0] == "T" {
                        StepKind::Transfer(TransferStep {
                            src: node(2)?,
                            dst: node(3)?,
                            payload: num(4)?,
                            bytes: num(5)?,
                        })
                    } else {
                        let inputs = list_of(tok.get(4).ok_or_else(|| bad(line))?, "in=")?
                            .iter()
                            .map(|item| parse_operand(item).ok_or_else(|| bad(line)))
                            .collect::<Result<Vec<_>>>()?;
                        StepKind::Compute(ComputeStep { node: node(2)?, output: num(3)?, inputs })
                    };
                    g.steps.push(Step { kind, deps });
                }
                Some("O") => {
                    g.outputs = tok[1..]
                        .join("")
                        .split(',')
                        .filter(|x| !x.is_empty())
                        .map(|x| x.parse().map_err(|_| bad(line)))
                        .collect::<Result<Vec<_>>>()?;
                }
                _ => return Err(bad(line)),
            }
        }
        g.validate()?;
        Ok(g)
    }
}

fn join<T: fmt::Display>(it: impl Iterator<Item = T>) -> String {
    it.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_operand(s: &str) -> Option<(Operand, Gf256)> {
    let (what, coef) = s.split_once('*')?;
    let coef = Gf256(u8::from_str_radix(coef, 16).ok()?);
    let op = if let Some(rest) = what.strip_prefix('L') {
        let (c, p) = rest.split_once('.')?;
        Operand::Local { chunk: c.parse().ok()?, packet: p.parse().ok()? }
    } else {
        Operand::Payload(what.strip_prefix('P')?.parse().ok()?)
    };
    Some((op, coef))
}

/// Per-node ingress and egress bytes over all transfer steps.
pub fn flow_byte_summary(graph: &DataFlowGraph) -> BTreeMap<NodeId, NodeBytes> {
    let mut out: BTreeMap<NodeId, NodeBytes> = BTreeMap::new();
    for (_, t) in graph.transfers() {
        out.entry(t.src).or_default().egress += t.bytes as u64;
        out.entry(t.dst).or_default().ingress += t.bytes as u64;
    }
    out
}

/// Incremental graph construction with automatic dependencies.
struct Builder {
    packet_size: usize,
    steps: Vec<Step>,
    payloads: Vec<PayloadInfo>,
    /// Step that made a payload available at a node.
    avail: HashMap<(NodeId, PayloadId), StepId>,
    /// Last transfer on each connection.
    last_on_link: HashMap<(NodeId, NodeId), StepId>,
}

impl Builder {
    fn new(packet_size: usize) -> Self {
        Builder {
            packet_size,
            steps: Vec::new(),
            payloads: Vec::new(),
            avail: HashMap::new(),
            last_on_link: HashMap::new(),
        }
    }

    fn resume(g: &DataFlowGraph) -> Self {
        let mut b = Builder::new(g.packet_size);
        b.payloads = g.payloads.clone();
        for (i, s) in g.steps.iter().enumerate() {
            match &s.kind {
                StepKind::Transfer(t) => {
                    b.avail.insert((t.dst, t.payload), i);
                    b.last_on_link.insert((t.src, t.dst), i);
                }
                StepKind::Compute(c) => {
                    b.avail.insert((c.node, c.output), i);
                }
            }
        }
        b.steps = g.steps.clone();
        b
    }

    fn payload(&mut self, info: PayloadInfo) -> PayloadId {
        self.payloads.push(info);
        self.payloads.len() - 1
    }

    fn compute(&mut self, node: NodeId, inputs: Vec<(Operand, Gf256)>, output: PayloadId) {
        let mut deps: Vec<StepId> = inputs
            .iter()
            .filter_map(|(o, _)| match o {
                Operand::Payload(p) => Some(self.avail[&(node, *p)]),
                Operand::Local { .. } => None,
            })
            .collect();
        deps.sort_unstable();
        deps.dedup();
        let id = self.steps.len();
        self.steps.push(Step { kind: StepKind::Compute(ComputeStep { node, inputs, output }), deps });
        self.avail.insert((node, output), id);
    }

    fn transfer(&mut self, src: NodeId, dst: NodeId, payload: PayloadId) {
        let mut deps = vec![self.avail[&(src, payload)]];
        if let Some(&prev) = self.last_on_link.get(&(src, dst)) {
            deps.push(prev);
        }
        deps.sort_unstable();
        deps.dedup();
        let id = self.steps.len();
        self.steps.push(Step {
            kind: StepKind::Transfer(TransferStep { src, dst, payload, bytes: self.packet_size }),
            deps,
        });
        self.avail.insert((dst, payload), id);
        self.last_on_link.insert((src, dst), id);
    }
}

/// Symbolic operation within one packet's reconstruction; slots name the
/// packet's payloads in creation order.
#[derive(Debug, Clone)]
enum Op {
    Compute { node: NodeId, inputs: Vec<(Src, Gf256)>, out: usize },
    Transfer { src: NodeId, dst: NodeId, slot: usize },
}

#[derive(Debug, Clone, Copy)]
enum Src {
    Local(usize),
    Slot(usize),
}

/// Per-packet operations grouped by hop level.
type Levels = Vec<Vec<Op>>;

fn parallel_levels(nodes: &[NodeId], chunks: &[usize], coefs: &[Gf256], starter: NodeId) -> Levels {
    let k = nodes.len();
    let agg = nodes[k - 1];
    let mut first = Vec::new();
    for l in 0..k - 1 {
        first.push(Op::Compute { node: nodes[l], inputs: vec![(Src::Local(chunks[l]), Gf256::ONE)], out: l });
        first.push(Op::Transfer { src: nodes[l], dst: agg, slot: l });
    }
    let mut inputs: Vec<(Src, Gf256)> = (0..k - 1).map(|l| (Src::Slot(l), coefs[l])).collect();
    inputs.push((Src::Local(chunks[k - 1]), coefs[k - 1]));
    let mut second = vec![Op::Compute { node: agg, inputs, out: k - 1 }];
    if agg != starter {
        second.push(Op::Transfer { src: agg, dst: starter, slot: k - 1 });
    }
    vec![first, second]
}

fn chain_levels(nodes: &[NodeId], chunks: &[usize], coefs: &[Gf256], starter: NodeId) -> Levels {
    let k = nodes.len();
    let mut levels = Vec::with_capacity(k);
    for l in 0..k {
        let mut inputs = vec![(Src::Local(chunks[l]), coefs[l])];
        if l > 0 {
            inputs.insert(0, (Src::Slot(l - 1), Gf256::ONE));
        }
        let mut ops = vec![Op::Compute { node: nodes[l], inputs, out: l }];
        let next = if l + 1 < k { Some(nodes[l + 1]) } else { (nodes[l] != starter).then_some(starter) };
        if let Some(dst) = next {
            ops.push(Op::Transfer { src: nodes[l], dst, slot: l });
        }
        levels.push(ops);
    }
    levels
}

/// Balanced binary aggregation tree over list positions; at every level
/// position pairs (a, b) send a's partial sum to b, an unpaired position
/// moves up unchanged. The last position is the root.
fn tree_levels(nodes: &[NodeId], chunks: &[usize], coefs: &[Gf256], starter: NodeId) -> Levels {
    let k = nodes.len();
    let mut slot_of: Vec<usize> = (0..k).collect();
    let mut next_slot = k;
    let leaves: Vec<Op> = (0..k)
        .map(|l| Op::Compute { node: nodes[l], inputs: vec![(Src::Local(chunks[l]), coefs[l])], out: l })
        .collect();
    let mut levels = vec![leaves];
    let mut live: Vec<usize> = (0..k).collect();
    while live.len() > 1 {
        let mut ops = Vec::new();
        let mut up = Vec::new();
        for pair in live.chunks(2) {
            if let [a, b] = *pair {
                ops.push(Op::Transfer { src: nodes[a], dst: nodes[b], slot: slot_of[a] });
                ops.push(Op::Compute {
                    node: nodes[b],
                    inputs: vec![(Src::Slot(slot_of[b]), Gf256::ONE), (Src::Slot(slot_of[a]), Gf256::ONE)],
                    out: next_slot,
                });
                slot_of[b] = next_slot;
                next_slot += 1;
                up.push(b);
            } else {
                up.push(pair[0]);
            }
        }
        levels.push(ops);
        live = up;
    }
    let root = live[0];
    if nodes[root] != starter {
        levels.push(vec![Op::Transfer { src: nodes[root], dst: starter, slot: slot_of[root] }]);
    }
    levels
}

/// Compiles a plan into its strategy-specific data flow.
///
/// Packets are grouped into rounds of one packet per list. Operations are
/// emitted in wavefront order: hop level `h` of round `t` goes out in
/// wave `t + h`, so every connection's FIFO sees packets in pipeline order.
pub fn build_flow(plan: &ReconstructionPlan) -> Result<DataFlowGraph> {
    let k = plan.params.k;
    if plan.lists.is_empty() || plan.lists.iter().any(|l| l.len() != k) {
        return Err(Error::InvalidParams("plan lists must hold k agents".into()));
    }
    if plan.strategy.uses_all_survivors() && plan.lists.len() != plan.q() {
        return Err(Error::InvalidParams("all-survivor plan needs q lists".into()));
    }
    if !plan.strategy.external_starter() && plan.external_starter() {
        return Err(Error::InvalidParams(format!("{} needs a source-node starter", plan.strategy)));
    }
    let starter = plan.starter;
    let per_list: Vec<Levels> = plan
        .lists
        .iter()
        .zip(&plan.coefficient_lists)
        .map(|(list, cl)| {
            let nodes: Vec<NodeId> = list.iter().map(|&p| plan.agents[p].node).collect();
            let chunks = &cl.helper_chunk_indices;
            let coefs = &cl.coefficients;
            match plan.strategy {
                Strategy::Traditional | Strategy::AplsParallel => {
                    parallel_levels(&nodes, chunks, coefs, starter)
                }
                Strategy::EcPipe | Strategy::EcPipeB | Strategy::AplsPipelined => {
                    chain_levels(&nodes, chunks, coefs, starter)
                }
                Strategy::Ppr => tree_levels(&nodes, chunks, coefs, starter),
            }
        })
        .collect();

    let lists = plan.lists.len();
    let d = plan.packet_count();
    let rounds = d.div_ceil(lists);
    let depth = per_list.iter().map(Vec::len).max().unwrap_or(0);
    let mut b = Builder::new(plan.params.packet_size);
    let mut slots: Vec<Vec<Option<PayloadId>>> = vec![Vec::new(); d];
    let mut outputs = vec![usize::MAX; d];

    for wave in 0..rounds + depth {
        for h in 0..depth {
            let Some(round) = wave.checked_sub(h) else { continue };
            if round >= rounds {
                continue;
            }
            for packet in round * lists..((round + 1) * lists).min(d) {
                let list = plan.packet_assignment[packet];
                let Some(ops) = per_list[list].get(h) else { continue };
                for op in ops {
                    match op {
                        Op::Compute { node, inputs, out } => {
                            let resolved = inputs
                                .iter()
                                .map(|(s, g)| {
                                    let o = match *s {
                                        Src::Local(chunk) => Operand::Local { chunk, packet },
                                        Src::Slot(x) => Operand::Payload(
                                            slots[packet][x].expect("slot produced at an earlier level"),
                                        ),
                                    };
                                    (o, *g)
                                })
                                .collect();
                            let id = b.payload(PayloadInfo {
                                list: list as u32,
                                packet: packet as u32,
                                stage: *out as u32,
                            });
                            let sl = &mut slots[packet];
                            if sl.len() <= *out {
                                sl.resize(*out + 1, None);
                            }
                            sl[*out] = Some(id);
                            b.compute(*node, resolved, id);
                            outputs[packet] = id;
                        }
                        Op::Transfer { src, dst, slot } => {
                            let id = slots[packet][*slot].expect("slot produced before transfer");
                            b.transfer(*src, *dst, id);
                            outputs[packet] = id;
                        }
                    }
                }
            }
        }
    }
    let g = DataFlowGraph {
        packet_size: plan.params.packet_size,
        starter,
        sink: starter,
        steps: b.steps,
        payloads: b.payloads,
        outputs,
    };
    debug_assert!(g.validate().is_ok());
    Ok(g)
}

/// Direct read: `holder` streams its chunk to `reader`, packet by packet.
pub fn normal_read_flow(
    holder: NodeId,
    chunk: usize,
    reader: NodeId,
    chunk_size: usize,
    packet_size: usize,
) -> Result<DataFlowGraph> {
    if packet_size == 0 || chunk_size % packet_size != 0 {
        return Err(Error::InvalidParams("packet size must divide chunk size".into()));
    }
    let mut b = Builder::new(packet_size);
    let mut outputs = Vec::new();
    for packet in 0..chunk_size / packet_size {
        let id = b.payload(PayloadInfo { list: 0, packet: packet as u32, stage: 0 });
        b.compute(holder, vec![(Operand::Local { chunk, packet }, Gf256::ONE)], id);
        if holder != reader {
            b.transfer(holder, reader, id);
        }
        outputs.push(id);
    }
    Ok(DataFlowGraph {
        packet_size,
        starter: reader,
        sink: reader,
        steps: b.steps,
        payloads: b.payloads,
        outputs,
    })
}

/// Runs the graph step by step in id order and returns the chunk assembled
/// at the sink. `chunks` maps stripe chunk index to its bytes.
pub fn execute_local(graph: &DataFlowGraph, chunks: &HashMap<usize, Vec<u8>>) -> Result<Vec<u8>> {
    graph.validate()?;
    let ps = graph.packet_size;
    let mut held: HashMap<(NodeId, PayloadId), Vec<u8>> = HashMap::new();
    for (i, step) in graph.steps.iter().enumerate() {
        match &step.kind {
            StepKind::Compute(c) => {
                let mut out = vec![0u8; ps];
                for (op, coef) in &c.inputs {
                    let src: &[u8] = match op {
                        Operand::Local { chunk, packet } => {
                            let data = chunks.get(chunk).ok_or(Error::MissingChunk(*chunk))?;
                            data.get(packet * ps..(packet + 1) * ps).ok_or(Error::MissingChunk(*chunk))?
                        }
                        Operand::Payload(p) => held
                            .get(&(c.node, *p))
                            .ok_or_else(|| Error::Graph(format!("step {i}: payload {p} not at {}", c.node)))?,
                    };
                    mul_add_slice(*coef, src, &mut out);
                }
                held.insert((c.node, c.output), out);
            }
            StepKind::Transfer(t) => {
                let data = held
                    .get(&(t.src, t.payload))
                    .ok_or_else(|| Error::Graph(format!("step {i}: payload {} not at {}", t.payload, t.src)))?
                    .clone();
                held.insert((t.dst, t.payload), data);
            }
        }
    }
    let mut out = Vec::with_capacity(graph.outputs.len() * ps);
    for (i, &p) in graph.outputs.iter().enumerate() {
        let data = held
            .get(&(graph.sink, p))
            .ok_or_else(|| Error::Graph(format!("packet {i} never reached {}", graph.sink)))?;
        out.extend_from_slice(data);
    }
    Ok(out)
}
