//! Degraded-read planning.
//!
//! A plan fixes which surviving chunks take part (the agents `F_0..F_{q-1}`,
//! ordered by chunk index), how they are grouped into reconstruction lists,
//! which list rebuilds which packet, the decoding coefficients of every list
//! and the starter node that receives the reconstructed chunk.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gf::GfMatrix;
use crate::rscode::{decoding_coefficients, CodeParams, CoefficientList};
use crate::strategy::Strategy;
use crate::NodeId;

pub const DEFAULT_WINDOW_SECS: f64 = 60.0;
pub const DEFAULT_LIGHT_FRACTION: f64 = 0.25;
pub const DEFAULT_REFRESH_SECS: f64 = 1.0;

/// Windowed request history per node. Timestamps are seconds on any
/// monotonic clock chosen by the owner.
#[derive(Debug, Clone)]
pub struct LoadTable {
    window: f64,
    light_fraction: f64,
    refresh_interval: f64,
    entries: HashMap<NodeId, VecDeque<(f64, u64)>>,
    snapshot: Option<(f64, HashMap<NodeId, u64>)>,
}

impl Default for LoadTable {
    fn default() -> Self {
        LoadTable::new(DEFAULT_WINDOW_SECS)
    }
}

impl LoadTable {
    pub fn new(window_secs: f64) -> Self {
        LoadTable {
            window: window_secs,
            light_fraction: DEFAULT_LIGHT_FRACTION,
            refresh_interval: DEFAULT_REFRESH_SECS,
            entries: HashMap::new(),
            snapshot: None,
        }
    }

    pub fn with_light_fraction(mut self, f: f64) -> Self {
        self.light_fraction = f.clamp(0.0, 1.0);
        self
    }

    pub fn with_refresh_interval(mut self, secs: f64) -> Self {
        self.refresh_interval = secs.max(0.0);
        self
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn record_request(&mut self, node: NodeId, bytes: u64, now: f64) {
        self.entries.entry(node).or_default().push_back((now, bytes));
        self.evict(now);
    }

    fn evict(&mut self, now: f64) {
        let cutoff = now - self.window;
        for q in self.entries.values_mut() {
            while q.front().is_some_and(|&(t, _)| t < cutoff) {
                q.pop_front();
            }
        }
        self.entries.retain(|_, q| !q.is_empty());
    }

    pub fn entry_count(&mut self, now: f64) -> usize {
        self.evict(now);
        self.entries.values().map(VecDeque::len).sum()
    }

    /// Bytes requested from `node` within the window ending at `now`.
    pub fn bytes_in_window(&mut self, node: NodeId, now: f64) -> u64 {
        self.evict(now);
        self.entries.get(&node).map_or(0, |q| q.iter().map(|&(_, b)| b).sum())
    }

    fn totals(&mut self, now: f64) -> &HashMap<NodeId, u64> {
        let stale = match &self.snapshot {
            Some((at, _)) => now - at >= self.refresh_interval || now < *at,
            None => true,
        };
        if stale {
            self.evict(now);
            let totals = self
                .entries
                .iter()
                .map(|(n, q)| (*n, q.iter().map(|&(_, b)| b).sum()))
                .collect();
            self.snapshot = Some((now, totals));
        }
        &self.snapshot.as_ref().expect("snapshot set above").1
    }

    /// Candidates whose windowed total is at or below the light-fraction
    /// quantile (nearest rank) of the candidates' totals.
    pub fn light_set(&mut self, candidates: &[NodeId], now: f64) -> Vec<NodeId> {
        if candidates.is_empty() {
            return Vec::new();
        }
        let f = self.light_fraction;
        let totals = self.totals(now);
        let load: Vec<u64> = candidates.iter().map(|n| totals.get(n).copied().unwrap_or(0)).collect();
        let mut sorted = load.clone();
        sorted.sort_unstable();
        let rank = ((f * sorted.len() as f64).ceil() as usize).max(1) - 1;
        let cut = sorted[rank.min(sorted.len() - 1)];
        candidates
            .iter()
            .zip(&load)
            .filter(|(_, &l)| l <= cut)
            .map(|(n, _)| *n)
            .collect()
    }
}

/// Picks a starter uniformly from the light set of `candidates`.
pub fn select_starter<R: Rng + ?Sized>(
    load: &mut LoadTable,
    candidates: &[NodeId],
    now: f64,
    rng: &mut R,
) -> Result<NodeId> {
    let mut light = load.light_set(candidates, now);
    if light.is_empty() {
        light = candidates.to_vec();
    }
    light.choose(rng).copied().ok_or(Error::NoStarterCandidate)
}

/// Reconstruction list `r_i = [F_{(i-k+1) mod q}, ..., F_{i mod q}]` for
/// `i in 0..q`. Entries are agent positions; the last one aggregates.
pub fn build_lists(k: usize, q: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || q < k {
        return Err(Error::InsufficientSources { need: k, have: q });
    }
    Ok((0..q)
        .map(|i| (0..k).map(|l| (i + q + l + 1 - k) % q).collect())
        .collect())
}

/// Packet `p_i` goes to list `i mod q`.
pub fn assign_packets(chunk_size: usize, packet_size: usize, q: usize) -> Result<Vec<usize>> {
    if packet_size == 0 || chunk_size % packet_size != 0 {
        return Err(Error::InvalidParams(format!(
            "packet size {packet_size} does not divide chunk size {chunk_size}"
        )));
    }
    if q == 0 {
        return Err(Error::InsufficientSources { need: 1, have: 0 });
    }
    Ok((0..chunk_size / packet_size).map(|i| i % q).collect())
}

/// Bytes per agent in an all-survivor plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ByteBudget {
    pub recv_from_agents: f64,
    pub send_to_agents: f64,
    pub send_to_starter: f64,
    pub starter_recv: f64,
}

pub fn byte_budget(k: usize, q: usize, chunk_size: f64) -> ByteBudget {
    let share = chunk_size / q as f64;
    ByteBudget {
        recv_from_agents: (k - 1) as f64 * share,
        send_to_agents: (k - 1) as f64 * share,
        send_to_starter: share,
        starter_recv: chunk_size,
    }
}

/// A surviving chunk and the node that holds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Agent {
    pub node: NodeId,
    pub chunk: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionPlan {
    pub params: CodeParams,
    pub strategy: Strategy,
    pub lost: usize,
    /// `F_0..F_{q-1}`.
    pub agents: Vec<Agent>,
    /// Each list holds k agent positions.
    pub lists: Vec<Vec<usize>>,
    /// Packet index to list index.
    pub packet_assignment: Vec<usize>,
    pub coefficient_lists: Vec<CoefficientList>,
    pub starter: NodeId,
}

impl ReconstructionPlan {
    pub fn q(&self) -> usize {
        self.agents.len()
    }

    pub fn packet_count(&self) -> usize {
        self.packet_assignment.len()
    }

    pub fn list_nodes(&self, list: usize) -> Vec<NodeId> {
        self.lists[list].iter().map(|&p| self.agents[p].node).collect()
    }

    /// Whether the starter is outside the agent set.
    pub fn external_starter(&self) -> bool {
        self.agents.iter().all(|a| a.node != self.starter)
    }

    /// One command per agent, carrying the fields the agents need to derive
    /// their role. `addr` maps node ids to addresses.
    pub fn sub_request_commands<F: Fn(NodeId) -> String>(&self, addr: F) -> Vec<SubRequestCommand> {
        let cmd = SubRequestCommand {
            start_position: 0,
            read_length: self.params.chunk_size as u64,
            k: self.params.k as u32,
            m: self.params.m as u32,
            agent_count: self.q() as u32,
            agent_locations: self
                .agents
                .iter()
                .map(|a| AgentLocation { node: a.node, addr: addr(a.node) })
                .collect(),
            chunk_indices: self.agents.iter().map(|a| a.chunk as u32).collect(),
            lost_chunk_index: self.lost as u32,
            reconstruction_method: self.strategy,
            packet_size: self.params.packet_size as u32,
        };
        vec![cmd; self.q()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLocation {
    pub node: NodeId,
    pub addr: String,
}

/// Sub-request sent to every agent: start position, read length, code
/// parameters, agent count, agent locations, chunk index per agent, lost
/// chunk index, reconstruction method and packet size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubRequestCommand {
    pub start_position: u64,
    pub read_length: u64,
    pub k: u32,
    pub m: u32,
    pub agent_count: u32,
    pub agent_locations: Vec<AgentLocation>,
    pub chunk_indices: Vec<u32>,
    pub lost_chunk_index: u32,
    pub reconstruction_method: Strategy,
    pub packet_size: u32,
}

impl SubRequestCommand {
    pub fn code_params(&self) -> Result<CodeParams> {
        CodeParams::new(
            self.k as usize,
            self.m as usize,
            self.read_length as usize,
            self.packet_size as usize,
        )
    }

    pub fn agents(&self) -> Vec<Agent> {
        self.agent_locations
            .iter()
            .zip(&self.chunk_indices)
            .map(|(loc, &c)| Agent { node: loc.node, chunk: c as usize })
            .collect()
    }

    /// Rebuilds the plan the coordinator made, given the starter it chose.
    pub fn to_plan(&self, generator: &GfMatrix, starter: NodeId) -> Result<ReconstructionPlan> {
        if self.start_position != 0 {
            return Err(Error::InvalidParams("only whole-chunk reads are supported".into()));
        }
        if self.agent_locations.len() != self.agent_count as usize
            || self.chunk_indices.len() != self.agent_count as usize
        {
            return Err(Error::InvalidParams("agent count does not match locations".into()));
        }
        assemble_plan(
            self.code_params()?,
            generator,
            self.lost_chunk_index as usize,
            self.agents(),
            self.reconstruction_method,
            starter,
        )
    }
}

/// Inputs to [`build_plan`].
#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    pub params: CodeParams,
    pub lost: usize,
    pub available: &'a [Agent],
    pub strategy: Strategy,
    /// Caps the number of agents for all-survivor strategies.
    pub max_agents: Option<usize>,
    /// Starter candidates for strategies with an external starter.
    pub starter_candidates: &'a [NodeId],
}

pub fn build_plan<R: Rng + ?Sized>(
    req: &PlanRequest<'_>,
    generator: &GfMatrix,
    load: &mut LoadTable,
    now: f64,
    rng: &mut R,
) -> Result<ReconstructionPlan> {
    let p = req.params;
    p.validate()?;
    if req.lost >= p.n() {
        return Err(Error::InvalidIndices(format!("lost chunk {} of {}", req.lost, p.n())));
    }
    let mut chunks = BTreeSet::new();
    for a in req.available {
        if a.chunk >= p.n() || a.chunk == req.lost || !chunks.insert(a.chunk) {
            return Err(Error::InvalidIndices(format!("bad survivor chunk {}", a.chunk)));
        }
    }
    if req.available.len() < p.k {
        return Err(Error::Unrecoverable { k: p.k, have: req.available.len() });
    }
    let mut survivors = req.available.to_vec();
    survivors.sort_by_key(|a| a.chunk);

    let q = if req.strategy.uses_all_survivors() {
        let cap = req.max_agents.unwrap_or(usize::MAX).max(p.k);
        survivors.len().min(p.n() - 1).min(cap)
    } else {
        p.k
    };
    survivors.truncate(q);

    let starter = if req.strategy.external_starter() {
        let candidates: Vec<NodeId> = req
            .starter_candidates
            .iter()
            .copied()
            .filter(|c| survivors.iter().all(|a| a.node != *c))
            .collect();
        select_starter(load, &candidates, now, rng)?
    } else {
        survivors[0].node
    };
    assemble_plan(p, generator, req.lost, survivors, req.strategy, starter)
}

/// Deterministic part of planning: lists, packet assignment and
/// coefficients for a fixed agent set and starter.
pub fn assemble_plan(
    params: CodeParams,
    generator: &GfMatrix,
    lost: usize,
    agents: Vec<Agent>,
    strategy: Strategy,
    starter: NodeId,
) -> Result<ReconstructionPlan> {
    let k = params.k;
    let q = agents.len();
    if q < k {
        return Err(Error::InsufficientSources { need: k, have: q });
    }
    if q > k && !strategy.uses_all_survivors() {
        return Err(Error::InvalidParams(format!("{strategy} uses exactly k agents")));
    }
    let lists = match strategy {
        Strategy::AplsParallel | Strategy::AplsPipelined => build_lists(k, q)?,
        Strategy::EcPipeB => {
            let mut l = build_lists(k, k)?;
            l.truncate((k - 1).max(1));
            l
        }
        Strategy::Traditional | Strategy::Ppr | Strategy::EcPipe => {
            // starter-hosting agent (position 0) goes last
            let mut order: Vec<usize> = (1..k).collect();
            order.push(0);
            vec![order]
        }
    };
    if !strategy.external_starter() && agents[*lists[0].last().unwrap()].node != starter {
        return Err(Error::InvalidParams(format!("{strategy} starter must be the aggregating source")));
    }
    let packet_assignment = assign_packets(params.chunk_size, params.packet_size, lists.len())?;
    let coefficient_lists = lists
        .iter()
        .map(|list| {
            let helpers: Vec<usize> = list.iter().map(|&pos| agents[pos].chunk).collect();
            decoding_coefficients(&params, generator, lost, &helpers)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionPlan {
        params,
        strategy,
        lost,
        agents,
        lists,
        packet_assignment,
        coefficient_lists,
        starter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rscode::{reconstruct_words, Stripe};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lists_rs42_q5() {
        let lists = build_lists(4, 5).unwrap();
        assert_eq!(
            lists,
            vec![
                vec![2, 3, 4, 0],
                vec![3, 4, 0, 1],
                vec![4, 0, 1, 2],
                vec![0, 1, 2, 3],
                vec![1, 2, 3, 4],
            ]
        );
    }

    #[test]
    fn lists_trivial() {
        assert_eq!(build_lists(1, 1).unwrap(), vec![vec![0]]);
        let l = build_lists(4, 4).unwrap();
        for (i, list) in l.iter().enumerate() {
            let mut s = list.clone();
            s.sort();
            assert_eq!(s, vec![0, 1, 2, 3]);
            assert_eq!(*list.last().unwrap(), i);
        }
        assert_eq!(build_lists(4, 3), Err(Error::InsufficientSources { need: 4, have: 3 }));
    }

    #[test]
    fn packet_assignment_examples() {
        let a = assign_packets(10 * 64, 64, 5).unwrap();
        assert_eq!(a[8], 3);
        let a = assign_packets(5 * 64, 64, 5).unwrap();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        let a = assign_packets(20 * 64, 64, 5).unwrap();
        for j in 0..5 {
            assert_eq!(a.iter().filter(|&&x| x == j).count(), 4);
        }
        assert!(assign_packets(100, 64, 5).is_err());
    }

    #[test]
    fn budget_examples() {
        let c = 1000.0;
        let b = byte_budget(4, 5, c);
        assert_eq!(b.recv_from_agents, 3.0 * c / 5.0);
        assert_eq!(b.send_to_starter, c / 5.0);
        let b = byte_budget(1, 1, c);
        assert_eq!((b.recv_from_agents, b.send_to_agents, b.send_to_starter), (0.0, 0.0, c));
        let mb = 1048576.0;
        let b = byte_budget(6, 11, 66.0 * mb);
        assert_eq!(b.recv_from_agents, 30.0 * mb);
        assert_eq!(b.send_to_agents, 30.0 * mb);
        assert_eq!(b.send_to_starter, 6.0 * mb);
    }

    #[test]
    fn load_table_records_and_evicts() {
        let mut t = LoadTable::new(10.0);
        t.record_request(NodeId(1), 100, 0.0);
        assert_eq!(t.entry_count(0.0), 1);
        assert_eq!(t.bytes_in_window(NodeId(1), 5.0), 100);
        assert_eq!(t.bytes_in_window(NodeId(1), 10.5), 0);
        assert_eq!(t.entry_count(10.5), 0);
    }

    #[test]
    fn load_table_replay_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = LoadTable::new(30.0);
        let mut log = Vec::new();
        let mut now = 0.0;
        for _ in 0..500 {
            now += rng.gen_range(0.0..1.0);
            let node = NodeId(rng.gen_range(0..3));
            let bytes = rng.gen_range(0..10_000u64);
            t.record_request(node, bytes, now);
            log.push((now, node, bytes));
        }
        for n in 0..3 {
            let expect: u64 = log
                .iter()
                .filter(|(ts, node, _)| *node == NodeId(n) && *ts >= now - 30.0)
                .map(|(_, _, b)| b)
                .sum();
            assert_eq!(t.bytes_in_window(NodeId(n), now), expect);
        }
    }

    #[test]
    fn starter_prefers_light_nodes() {
        let mb = 1 << 20;
        let nodes = [NodeId(1), NodeId(2), NodeId(3), NodeId(4)];
        let mut t = LoadTable::new(60.0).with_light_fraction(0.5).with_refresh_interval(0.0);
        for (n, b) in nodes.iter().zip([100 * mb, 90 * mb, mb, 0]) {
            t.record_request(*n, b, 1.0);
        }
        // sort-and-cut oracle: two lightest of four
        let mut by_load: Vec<(u64, NodeId)> =
            nodes.iter().map(|&n| (t.bytes_in_window(n, 2.0), n)).collect();
        by_load.sort();
        let expect: Vec<NodeId> = by_load[..2].iter().map(|x| x.1).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let s = select_starter(&mut t, &nodes, 2.0, &mut rng).unwrap();
            assert!(expect.contains(&s));
        }
    }

    #[test]
    fn starter_zero_load_node_is_light() {
        let mut t = LoadTable::default().with_refresh_interval(0.0);
        t.record_request(NodeId(1), 500, 0.0);
        t.record_request(NodeId(2), 700, 0.0);
        let light = t.light_set(&[NodeId(1), NodeId(2), NodeId(3)], 0.0);
        assert!(light.contains(&NodeId(3)));
    }

    #[test]
    fn starter_idle_deterministic() {
        let cands: Vec<NodeId> = (0..8).map(NodeId).collect();
        let pick = |seed| {
            let mut t = LoadTable::default();
            select_starter(&mut t, &cands, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
        };
        assert_eq!(pick(3), pick(3));
        assert!(cands.contains(&pick(5)));
        let mut t = LoadTable::default();
        assert_eq!(
            select_starter(&mut t, &[], 0.0, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::NoStarterCandidate)
        );
    }

    #[test]
    fn light_set_refreshes_periodically() {
        let mut t = LoadTable::new(60.0).with_refresh_interval(1.0);
        let c = [NodeId(1), NodeId(2)];
        assert_eq!(t.light_set(&c, 0.0).len(), 2);
        t.record_request(NodeId(1), 1000, 0.5);
        // snapshot from t=0 still in use
        assert_eq!(t.light_set(&c, 0.6).len(), 2);
        assert_eq!(t.light_set(&c, 1.1), vec![NodeId(2)]);
    }

    fn agents(chunks: impl IntoIterator<Item = usize>) -> Vec<Agent> {
        chunks.into_iter().map(|c| Agent { node: NodeId(c as u32), chunk: c }).collect()
    }

    fn plan_for(
        k: usize,
        m: usize,
        lost: &[usize],
        strategy: Strategy,
        chunk: usize,
        packet: usize,
    ) -> Result<ReconstructionPlan> {
        let p = CodeParams::new(k, m, chunk, packet).unwrap();
        let g = p.generator().unwrap();
        let avail = agents((0..k + m).filter(|c| !lost.contains(c)));
        let cands: Vec<NodeId> = (100..104).map(NodeId).collect();
        let req = PlanRequest {
            params: p,
            lost: lost[0],
            available: &avail,
            strategy,
            max_agents: None,
            starter_candidates: &cands,
        };
        build_plan(&req, &g, &mut LoadTable::default(), 0.0, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn plan_apls_rs42() {
        let plan = plan_for(4, 2, &[0], Strategy::AplsPipelined, 1024, 64).unwrap();
        assert_eq!(plan.q(), 5);
        assert_eq!(plan.lists.len(), 5);
        assert!(plan.external_starter());
        assert!(plan.starter.0 >= 100);
        assert_eq!(plan.lists[3], vec![0, 1, 2, 3]);
        assert_eq!(plan.coefficient_lists[3].helper_chunk_indices, vec![1, 2, 3, 4]);
        assert_eq!(plan.coefficient_lists[0].helper_chunk_indices, vec![3, 4, 5, 1]);
    }

    #[test]
    fn plan_ecpipe_rs42() {
        let plan = plan_for(4, 2, &[0], Strategy::EcPipe, 1024, 64).unwrap();
        assert_eq!(plan.q(), 4);
        assert_eq!(plan.lists.len(), 1);
        assert_eq!(plan.starter, NodeId(1));
        assert!(!plan.external_starter());
        assert!(plan.packet_assignment.iter().all(|&l| l == 0));
    }

    #[test]
    fn plan_rs66_two_lost() {
        let plan = plan_for(6, 6, &[0, 7], Strategy::AplsParallel, 1024, 64).unwrap();
        assert_eq!(plan.q(), 10);
        assert!(plan.agents.iter().all(|a| a.chunk != 7 && a.chunk != 0));
    }

    #[test]
    fn plan_unrecoverable() {
        let err = plan_for(4, 2, &[0, 1, 2], Strategy::AplsParallel, 1024, 64).unwrap_err();
        assert_eq!(err, Error::Unrecoverable { k: 4, have: 3 });
    }

    #[test]
    fn plan_respects_max_agents() {
        let p = CodeParams::new(6, 6, 1024, 64).unwrap();
        let g = p.generator().unwrap();
        let avail = agents(1..12);
        for q in 6..=11 {
            let req = PlanRequest {
                params: p,
                lost: 0,
                available: &avail,
                strategy: Strategy::AplsPipelined,
                max_agents: Some(q),
                starter_candidates: &[NodeId(50)],
            };
            let plan =
                build_plan(&req, &g, &mut LoadTable::default(), 0.0, &mut rand::thread_rng()).unwrap();
            assert_eq!(plan.q(), q);
            assert_eq!(plan.starter, NodeId(50));
        }
    }

    #[test]
    fn plan_coefficients_reconstruct_packets() {
        let (k, m, chunk, packet) = (4, 2, 640, 64);
        let p = CodeParams::new(k, m, chunk, packet).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Vec<u8>> = (0..k)
            .map(|_| {
                let mut v = vec![0u8; chunk];
                rng.fill_bytes(&mut v);
                v
            })
            .collect();
        let stripe = Stripe::from_data(p, data).unwrap();
        for strategy in Strategy::ALL {
            let plan = plan_for(k, m, &[2], strategy, chunk, packet).unwrap();
            for (i, &list) in plan.packet_assignment.iter().enumerate() {
                let cl = &plan.coefficient_lists[list];
                let range = i * packet..(i + 1) * packet;
                let slices: Vec<&[u8]> =
                    cl.helper_chunk_indices.iter().map(|&c| &stripe.chunks[c][range.clone()]).collect();
                assert_eq!(reconstruct_words(cl, &slices).unwrap(), &stripe.chunks[2][range]);
            }
        }
    }

    #[test]
    fn command_round_trips_to_same_plan() {
        let plan = plan_for(6, 3, &[4], Strategy::AplsPipelined, 4096, 256).unwrap();
        let cmds = plan.sub_request_commands(|n| format!("127.0.0.1:{}", 7000 + n.0));
        assert_eq!(cmds.len(), plan.q());
        let g = plan.params.generator().unwrap();
        assert_eq!(cmds[0].to_plan(&g, plan.starter).unwrap(), plan);
    }

    proptest! {
        #[test]
        fn lists_balanced(k in 1usize..12, extra in 0usize..12) {
            let q = k + extra.min(k);
            let lists = build_lists(k, q).unwrap();
            prop_assert_eq!(lists.len(), q);
            let mut count = vec![0usize; q];
            for (i, l) in lists.iter().enumerate() {
                let set: BTreeSet<_> = l.iter().collect();
                prop_assert_eq!(set.len(), k);
                prop_assert_eq!(*l.last().unwrap(), i);
                for &a in l { count[a] += 1; }
            }
            prop_assert!(count.iter().all(|&c| c == k));
        }

        #[test]
        fn assignment_partitions(d in 1usize..500, q in 1usize..20) {
            let a = assign_packets(d * 8, 8, q).unwrap();
            prop_assert_eq!(a.len(), d);
            let mut per = vec![0usize; q];
            for &l in &a { per[l] += 1; }
            let (lo, hi) = (*per.iter().min().unwrap(), *per.iter().max().unwrap());
            if d % q == 0 {
                prop_assert!(per.iter().all(|&c| c == d / q));
            } else {
                prop_assert!(hi - lo <= 1);
            }
        }

        #[test]
        fn starter_always_candidate(seed in any::<u64>(), loads in proptest::collection::vec(0u64..1000, 1..10)) {
            let mut t = LoadTable::default().with_refresh_interval(0.0);
            let cands: Vec<NodeId> = (0..loads.len() as u32).map(NodeId).collect();
            for (n, l) in cands.iter().zip(&loads) { t.record_request(*n, *l, 0.0); }
            let a = select_starter(&mut t, &cands, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = select_starter(&mut t, &cands, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(cands.contains(&a));
            prop_assert_eq!(a, b);
        }
    }
}
