//! Flow-level simulation of a [`DataFlowGraph`] over bandwidth-capped nodes,
//! and the closed-form degraded-read latency model.
//!
//! Every node has an upstream and a downstream capacity. Active transfers
//! share them max-min fairly; rates are recomputed whenever a transfer
//! starts or finishes. A transfer becomes eligible once its dependencies
//! finish, then spends the configured hop latency before moving data.
//! Compute steps take no time.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::strategy::{flow_byte_summary, DataFlowGraph, NodeBytes, StepKind};
use crate::NodeId;

/// Usable bandwidth in bits per second (background load already
/// subtracted). `f64::INFINITY` models an unconstrained node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeProfile {
    pub up_bw: f64,
    pub down_bw: f64,
}

impl NodeProfile {
    pub fn symmetric(bw: f64) -> Self {
        NodeProfile { up_bw: bw, down_bw: bw }
    }

    pub fn unconstrained() -> Self {
        Self::symmetric(f64::INFINITY)
    }

    /// Total bandwidth scaled by the share left for the read.
    pub fn throttled(total_bw: f64, theta: f64) -> Self {
        Self::symmetric(total_bw * theta)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimConfig {
    /// Fixed per-transfer latency in seconds, spent before data moves and
    /// occupying the connection.
    pub hop_latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTiming {
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub latency: f64,
    pub bytes: BTreeMap<NodeId, NodeBytes>,
    pub timings: Vec<StepTiming>,
}

pub fn simulate(graph: &DataFlowGraph, profiles: &HashMap<NodeId, NodeProfile>) -> Result<SimResult> {
    simulate_with(graph, profiles, SimConfig::default())
}

#[derive(Clone, Copy)]
struct Flow {
    step: usize,
    up: usize,
    down: usize,
    remaining: f64,
    rate: f64,
}

pub fn simulate_with(
    graph: &DataFlowGraph,
    profiles: &HashMap<NodeId, NodeProfile>,
    cfg: SimConfig,
) -> Result<SimResult> {
    graph.validate()?;
    // resources: 2*i = upstream of node i, 2*i+1 = downstream
    let nodes = graph.nodes();
    let mut index = HashMap::new();
    let mut capacity = Vec::with_capacity(nodes.len() * 2);
    for (i, n) in nodes.iter().enumerate() {
        let p = profiles.get(n).ok_or(Error::MissingProfile(n.0))?;
        if !(p.up_bw > 0.0 && p.down_bw > 0.0) {
            return Err(Error::InvalidParams(format!("node {n} has non-positive bandwidth")));
        }
        index.insert(*n, i);
        capacity.push(p.up_bw);
        capacity.push(p.down_bw);
    }

    let n = graph.steps.len();
    let mut pending = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, s) in graph.steps.iter().enumerate() {
        pending[i] = s.deps.len();
        for &d in &s.deps {
            users[d].push(i);
        }
    }
    let mut timings = vec![StepTiming::default(); n];
    let mut now = 0.0f64;
    let mut latency = 0.0f64;
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| pending[i] == 0).collect();
    let mut delayed: Vec<(f64, usize)> = Vec::new();
    let mut active: Vec<Flow> = Vec::new();
    let mut done = 0usize;

    let activate = |step: usize, active: &mut Vec<Flow>| {
        let StepKind::Transfer(t) = &graph.steps[step].kind else { unreachable!() };
        active.push(Flow {
            step,
            up: 2 * index[&t.src],
            down: 2 * index[&t.dst] + 1,
            remaining: t.bytes as f64 * 8.0,
            rate: 0.0,
        });
    };

    loop {
        // Drain zero-time work.
        while let Some(s) = ready.pop() {
            timings[s].start = now;
            match &graph.steps[s].kind {
                StepKind::Compute(_) => {
                    timings[s].finish = now;
                    done += 1;
                    for &u in &users[s] {
                        pending[u] -= 1;
                        if pending[u] == 0 {
                            ready.push(u);
                        }
                    }
                }
                StepKind::Transfer(_) if cfg.hop_latency > 0.0 => delayed.push((now + cfg.hop_latency, s)),
                StepKind::Transfer(_) => activate(s, &mut active),
            }
        }
        if active.is_empty() && delayed.is_empty() {
            break;
        }
        allocate(&mut active, &capacity);

        let mut dt = f64::INFINITY;
        for f in &active {
            dt = dt.min(if f.rate.is_infinite() { 0.0 } else { f.remaining / f.rate });
        }
        let next_wake = delayed.iter().map(|&(t, _)| t).fold(f64::INFINITY, f64::min);
        let wake_first = next_wake - now <= dt;
        if wake_first {
            dt = (next_wake - now).max(0.0);
        }
        now += dt;

        let mut finished = Vec::new();
        active.retain_mut(|f| {
            if f.rate.is_infinite() {
                finished.push(f.step);
                return false;
            }
            f.remaining -= f.rate * dt;
            // floating-point residue below a picosecond of transfer
            if f.remaining <= 1e-6_f64.max(f.rate * 1e-12) {
                finished.push(f.step);
                false
            } else {
                true
            }
        });
        if !wake_first && finished.is_empty() {
            // dt came from the smallest remaining/rate; force that flow out
            if let Some(pos) = active
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1.remaining / a.1.rate).total_cmp(&(b.1.remaining / b.1.rate)))
                .map(|(i, _)| i)
            {
                finished.push(active.swap_remove(pos).step);
            }
        }
        if wake_first {
            let mut i = 0;
            while i < delayed.len() {
                if delayed[i].0 <= now {
                    let (_, s) = delayed.swap_remove(i);
                    activate(s, &mut active);
                } else {
                    i += 1;
                }
            }
        }
        finished.sort_unstable();
        for s in finished {
            timings[s].finish = now;
            latency = latency.max(now);
            done += 1;
            for &u in &users[s] {
                pending[u] -= 1;
                if pending[u] == 0 {
                    ready.push(u);
                }
            }
        }
        // keep pop order deterministic: lowest step id first
        ready.sort_unstable_by(|a, b| b.cmp(a));
    }
    if done != n {
        return Err(Error::Graph("simulation stalled".into()));
    }
    Ok(SimResult { latency, bytes: flow_byte_summary(graph), timings })
}

/// Max-min fair rates by progressive filling over up/down resources.
fn allocate(flows: &mut [Flow], capacity: &[f64]) {
    let mut cap = capacity.to_vec();
    let mut count = vec![0usize; capacity.len()];
    for f in flows.iter() {
        count[f.up] += 1;
        count[f.down] += 1;
    }
    let mut frozen = vec![false; flows.len()];
    let mut left = flows.len();
    while left > 0 {
        let mut best = f64::INFINITY;
        let mut best_r = usize::MAX;
        for (r, &c) in count.iter().enumerate() {
            if c > 0 {
                let share = cap[r] / c as f64;
                if share < best {
                    best = share;
                    best_r = r;
                }
            }
        }
        if best_r == usize::MAX {
            for (f, fz) in flows.iter_mut().zip(&frozen) {
                if !fz {
                    f.rate = f64::INFINITY;
                }
            }
            return;
        }
        for (i, f) in flows.iter_mut().enumerate() {
            if frozen[i] || (f.up != best_r && f.down != best_r) {
                continue;
            }
            f.rate = best;
            frozen[i] = true;
            left -= 1;
            for r in [f.up, f.down] {
                cap[r] = (cap[r] - best).max(0.0);
                count[r] -= 1;
            }
        }
    }
}

/// Latency when the starter's downstream link is the bottleneck:
/// `c / (theta * B)`. `c` in bytes, `B` in bits per second.
pub fn predict_latency_starter_bound(chunk_bytes: f64, theta: f64, total_bw: f64) -> f64 {
    chunk_bytes * 8.0 / (theta * total_bw)
}

/// Latency with q agents and an unconstrained starter:
/// `k * c / (q * theta * B)`.
pub fn predict_latency_apls(k: usize, q: usize, chunk_bytes: f64, theta: f64, total_bw: f64) -> Result<f64> {
    if q < k {
        return Err(Error::InsufficientSources { need: k, have: q });
    }
    Ok(k as f64 * chunk_bytes * 8.0 / (q as f64 * theta * total_bw))
}

pub const CSV_HEADER: &str = "strategy,k,m,q,chunk_bytes,packet_bytes,helper_bw,starter_bw,latency_s";

/// One simulated configuration, as written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub strategy: String,
    pub k: usize,
    pub m: usize,
    pub q: usize,
    pub chunk_bytes: usize,
    pub packet_bytes: usize,
    pub helper_bw: f64,
    pub starter_bw: f64,
    pub latency_s: f64,
}

impl SimRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6}",
            self.strategy,
            self.k,
            self.m,
            self.q,
            self.chunk_bytes,
            self.packet_bytes,
            self.helper_bw,
            self.starter_bw,
            self.latency_s
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{assemble_plan, Agent};
    use crate::rscode::CodeParams;
    use crate::strategy::{build_flow, normal_read_flow, Strategy};
    use crate::units::{mbps, MB};

    fn uniform(graph: &DataFlowGraph, bw: f64, starter: Option<NodeProfile>) -> HashMap<NodeId, NodeProfile> {
        graph
            .nodes()
            .into_iter()
            .map(|n| {
                let p = if Some(n) == Some(graph.sink).filter(|_| starter.is_some()) {
                    starter.unwrap()
                } else {
                    NodeProfile::symmetric(bw)
                };
                (n, p)
            })
            .collect()
    }

    fn plan(k: usize, m: usize, q: usize, chunk: usize, packet: usize, s: Strategy) -> crate::plan::ReconstructionPlan {
        let p = CodeParams::new(k, m, chunk, packet).unwrap();
        let g = p.generator().unwrap();
        let agents: Vec<Agent> = (1..=q).map(|c| Agent { node: NodeId(c as u32), chunk: c }).collect();
        let starter = if s.external_starter() { NodeId(999) } else { agents[0].node };
        assemble_plan(p, &g, 0, agents, s, starter).unwrap()
    }

    #[test]
    fn single_transfer_64mb() {
        let g = normal_read_flow(NodeId(0), 0, NodeId(1), 64 * MB, 64 * MB).unwrap();
        let r = simulate(&g, &uniform(&g, mbps(100.0), None)).unwrap();
        assert!((r.latency - 5.12).abs() < 1e-9, "{}", r.latency);
    }

    #[test]
    fn two_transfers_share_downlink() {
        // nodes 0 and 1 each send one packet to node 2
        let mut a = normal_read_flow(NodeId(0), 0, NodeId(2), 1000, 1000).unwrap();
        let b = normal_read_flow(NodeId(1), 1, NodeId(2), 1000, 1000).unwrap();
        let off = a.steps.len();
        let poff = a.payloads.len();
        for mut s in b.steps {
            s.deps.iter_mut().for_each(|d| *d += off);
            match &mut s.kind {
                StepKind::Transfer(t) => t.payload += poff,
                StepKind::Compute(c) => c.output += poff,
            }
            a.steps.push(s);
        }
        a.payloads.extend(b.payloads);
        let mut prof = uniform(&a, 8000.0, None);
        prof.insert(NodeId(0), NodeProfile::unconstrained());
        prof.insert(NodeId(1), NodeProfile::unconstrained());
        let r = simulate(&a, &prof).unwrap();
        // each gets 4000 bit/s; 8000 bits each -> both finish at 2 s
        assert!((r.timings[1].finish - 2.0).abs() < 1e-9);
        assert!((r.timings[3].finish - 2.0).abs() < 1e-9);
    }

    #[test]
    fn missing_profile() {
        let g = normal_read_flow(NodeId(0), 0, NodeId(1), 64, 64).unwrap();
        let mut prof = uniform(&g, 1.0, None);
        prof.remove(&NodeId(1));
        assert_eq!(simulate(&g, &prof).unwrap_err(), Error::MissingProfile(1));
    }

    #[test]
    fn predictions() {
        let c = (64 * MB) as f64;
        let t = predict_latency_starter_bound(c, 0.067, mbps(1500.0));
        assert!((t - 5.12).abs() / 5.12 < 0.01, "{t}");
        assert!((predict_latency_starter_bound(1e6 / 8.0, 1.0, 1e6) - 1.0).abs() < 1e-12);
        let t = predict_latency_starter_bound((4 * MB) as f64, 1.0, mbps(1500.0));
        assert!((t - 0.021333).abs() < 1e-5, "{t}");
        let eq2 = predict_latency_starter_bound(c, 1.0, mbps(100.0));
        assert_eq!(predict_latency_apls(6, 6, c, 1.0, mbps(100.0)).unwrap(), eq2);
        for q in 7..=11 {
            let r = predict_latency_apls(6, q, c, 1.0, mbps(100.0)).unwrap() / eq2;
            assert!((r - 6.0 / q as f64).abs() < 1e-12);
        }
        let t = predict_latency_apls(6, 11, c, 1.0, mbps(100.0)).unwrap();
        assert!((t - 5.12 * 6.0 / 11.0).abs() < 1e-9);
        assert!(predict_latency_apls(6, 5, c, 1.0, 1.0).is_err());
    }

    #[test]
    fn ecpipe_chain_is_store_and_forward() {
        // d packets through h hops at equal rates: (d + h - 1) packet times
        let (chunk, packet) = (4 * MB, 64 * 1024);
        let pl = plan(4, 2, 4, chunk, packet, Strategy::EcPipe);
        let g = build_flow(&pl).unwrap();
        let bw = mbps(1500.0);
        let r = simulate(&g, &uniform(&g, bw, None)).unwrap();
        let d = chunk / packet;
        let hops = g.packet_depth(0);
        assert_eq!(hops, 3);
        let pt = packet as f64 * 8.0 / bw;
        let oracle = (d + hops - 1) as f64 * pt;
        assert!((r.latency - oracle).abs() < 1e-9, "{} vs {oracle}", r.latency);
        let bound = predict_latency_starter_bound(chunk as f64, 1.0, bw);
        assert!((bound - d as f64 * pt).abs() < 1e-12);
    }

    #[test]
    fn ecpipe_approaches_starter_bound() {
        let packet = 64 * 1024;
        let bw = mbps(1500.0);
        for d in [200, 400] {
            let g = build_flow(&plan(4, 2, 4, d * packet, packet, Strategy::EcPipe)).unwrap();
            let r = simulate(&g, &uniform(&g, bw, None)).unwrap();
            let expect = predict_latency_starter_bound((d * packet) as f64, 1.0, bw);
            assert!((r.latency - expect).abs() / expect < 0.02, "{} vs {expect}", r.latency);
        }
    }

    #[test]
    fn apls_rs66_matches_model() {
        let packet = 64 * 1024;
        let bw = mbps(100.0);
        for q in 7..=11 {
            let chunk = 10 * q * packet;
            for s in [Strategy::AplsPipelined, Strategy::AplsParallel] {
                let g = build_flow(&plan(6, 6, q, chunk, packet, s)).unwrap();
                let r = simulate(&g, &uniform(&g, bw, Some(NodeProfile::unconstrained()))).unwrap();
                let expect = predict_latency_apls(6, q, chunk as f64, 1.0, bw).unwrap();
                assert!((r.latency - expect).abs() / expect < 0.02, "{s} q={q}: {} vs {expect}", r.latency);
                assert_eq!(r.bytes, flow_byte_summary(&g));
            }
        }
    }

    #[test]
    fn uneven_lists_bound_by_busiest_agent() {
        // 8MB / 64KB = 128 packets over 11 lists: seven lists carry 12, four carry 11
        let (chunk, packet) = (8 * MB, 64 * 1024);
        let bw = mbps(100.0);
        let g = build_flow(&plan(6, 6, 11, chunk, packet, Strategy::AplsPipelined)).unwrap();
        let r = simulate(&g, &uniform(&g, bw, Some(NodeProfile::unconstrained()))).unwrap();
        let busiest = r.bytes.iter().filter(|(n, _)| **n != g.sink).map(|(_, b)| b.egress).max().unwrap();
        let floor = busiest as f64 * 8.0 / bw;
        assert!(r.latency >= floor - 1e-9);
        let expect = predict_latency_apls(6, 11, chunk as f64, 1.0, bw).unwrap();
        assert!(r.latency > expect);
        assert!(r.latency < 1.05 * expect);
    }

    #[test]
    fn apls_beats_ecpipe() {
        let (chunk, packet) = (4 * MB, 64 * 1024);
        let bw = mbps(200.0);
        let apls = build_flow(&plan(4, 2, 5, chunk, packet, Strategy::AplsPipelined)).unwrap();
        let ec = build_flow(&plan(4, 2, 4, chunk, packet, Strategy::EcPipe)).unwrap();
        let ra = simulate(&apls, &uniform(&apls, bw, Some(NodeProfile::unconstrained()))).unwrap();
        let re = simulate(&ec, &uniform(&ec, bw, None)).unwrap();
        assert!(ra.latency < re.latency);
    }

    #[test]
    fn deterministic() {
        let g = build_flow(&plan(4, 2, 5, 64 * 40, 64, Strategy::AplsParallel)).unwrap();
        let prof = uniform(&g, 1e6, None);
        let cfg = SimConfig { hop_latency: 1e-4 };
        assert_eq!(simulate_with(&g, &prof, cfg).unwrap(), simulate_with(&g, &prof, cfg).unwrap());
    }

    #[test]
    fn csv_row_format() {
        let r = SimRecord {
            strategy: "ecpipe".into(),
            k: 4,
            m: 2,
            q: 4,
            chunk_bytes: 1024,
            packet_bytes: 64,
            helper_bw: 100.0,
            starter_bw: 1500.0,
            latency_s: 0.5,
        };
        assert_eq!(r.csv_row(), "ecpipe,4,2,4,1024,64,100,1500,0.500000");
        assert_eq!(CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
    }
}
