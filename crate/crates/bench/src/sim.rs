//! Simulator backend.
//!
//! Chunk `c` lives on node `c`, the spare starter is node `n`, and every
//! read ends at the requestor. Helpers get the helper cap on both links;
//! the spare and the requestor get the starter cap.

use std::collections::HashMap;

use apls_core::netsim::{simulate_with, NodeProfile, SimConfig};
use apls_core::plan::{assemble_plan, Agent};
use apls_core::rscode::CodeParams;
use apls_core::strategy::{build_flow, normal_read_flow, DataFlowGraph};
use apls_core::units::mbps;
use apls_core::NodeId;

use crate::spec::{Config, Group};
use crate::Result;

pub struct SimBackend {
    pub hop_latency: f64,
    cache: HashMap<(usize, usize), f64>,
}

impl SimBackend {
    pub fn new(hop_latency: f64) -> Self {
        SimBackend { hop_latency, cache: HashMap::new() }
    }

    fn profiles(&self, graph: &DataFlowGraph, n: usize, helper_bw: f64, starter_bw: Option<f64>) -> HashMap<NodeId, NodeProfile> {
        let fast = starter_bw.map_or(NodeProfile::unconstrained(), |b| NodeProfile::symmetric(mbps(b)));
        graph
            .nodes()
            .into_iter()
            .map(|node| {
                let p = if (node.0 as usize) < n { NodeProfile::symmetric(mbps(helper_bw)) } else { fast };
                (node, p)
            })
            .collect()
    }

    fn run(&self, graph: &DataFlowGraph, n: usize, helper_bw: f64, starter_bw: Option<f64>) -> Result<f64> {
        let profiles = self.profiles(graph, n, helper_bw, starter_bw);
        Ok(simulate_with(graph, &profiles, SimConfig { hop_latency: self.hop_latency })?.latency)
    }

    pub fn normal(&mut self, g: &Group, starter_bw: Option<f64>, lost: usize) -> Result<f64> {
        let key = (usize::MAX, lost);
        if let Some(&t) = self.cache.get(&key) {
            return Ok(t);
        }
        let graph = normal_read_flow(NodeId(lost as u32), lost, NodeId::REQUESTOR, g.chunk, g.packet)?;
        let t = self.run(&graph, g.k + g.m, g.helper_bw, starter_bw)?;
        self.cache.insert(key, t);
        Ok(t)
    }

    /// `index` identifies the configuration within its group for caching.
    pub fn degraded(&mut self, index: usize, c: &Config, lost: usize) -> Result<f64> {
        if let Some(&t) = self.cache.get(&(index, lost)) {
            return Ok(t);
        }
        let graph = degraded_flow(c, lost)?;
        let t = self.run(&graph, c.k + c.m, c.helper_bw, c.starter_bw)?;
        self.cache.insert((index, lost), t);
        Ok(t)
    }

    pub fn clear(&mut self) {
        self.cache.clear();
    }
}

/// Flow for reconstructing chunk `lost` under `c`, delivered to the
/// requestor.
pub fn degraded_flow(c: &Config, lost: usize) -> Result<DataFlowGraph> {
    let params = CodeParams::new(c.k, c.m, c.chunk, c.packet)?;
    let generator = params.generator()?;
    let n = params.n();
    let agents: Vec<Agent> = (0..n)
        .filter(|&i| i != lost)
        .take(c.q)
        .map(|i| Agent { node: NodeId(i as u32), chunk: i })
        .collect();
    let starter = if c.strategy.external_starter() { NodeId(n as u32) } else { agents[0].node };
    let plan = assemble_plan(params, &generator, lost, agents, c.strategy, starter)?;
    Ok(build_flow(&plan)?.deliver_to(NodeId::REQUESTOR))
}
