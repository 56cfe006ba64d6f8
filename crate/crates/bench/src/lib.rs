//! Latency sweeps over the simulator and the localhost cluster, reported
//! as CSV and normalized to normal reads.

pub mod cluster;
pub mod report;
pub mod sim;
pub mod spec;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use report::{compare, format_table, read_rows, Comparison, Row, RowWriter};
pub use spec::{Backend, Config, ExperimentSpec, Group};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("spec: {0}")]
    Spec(String),
    #[error("compare: {0}")]
    Compare(String),
    #[error(transparent)]
    Core(#[from] apls_core::Error),
    #[error(transparent)]
    Cluster(#[from] apls_cluster::ClusterError),
    #[error("backend: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Runs every configuration, writing each row as soon as it is measured.
/// On error the rows written so far stay in `out`.
pub fn run_experiment<W: Write>(spec: &ExperimentSpec, out: &mut RowWriter<W>) -> Result<Vec<Row>> {
    let groups = spec.groups()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sim = sim::SimBackend::new(spec.hop_latency);
    let mut rows = Vec::new();
    for g in &groups {
        // lost chunk per repetition, shared by every strategy of the group
        let lost: Vec<usize> = (0..spec.repetitions).map(|_| rng.gen_range(0..g.k)).collect();
        let (normal, degraded) = match spec.backend {
            Backend::Simulator => {
                sim.clear();
                let normal = lost.iter().map(|&l| sim.normal(g, spec.starter_bw, l)).collect::<Result<Vec<_>>>()?;
                let degraded = g
                    .configs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| lost.iter().map(|&l| sim.degraded(i, c, l)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                (normal, degraded)
            }
            Backend::Cluster => {
                let cl = cluster::LocalCluster::start(g, spec.starter_bw, spec.seed)?;
                let normal = lost.iter().map(|&l| cl.normal(l).map(|d| d.as_secs_f64())).collect::<Result<Vec<_>>>()?;
                let degraded = g
                    .configs
                    .iter()
                    .map(|c| lost.iter().map(|&l| cl.degraded(c, l).map(|d| d.as_secs_f64())).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                (normal, degraded)
            }
        };
        let base = report::summarize(&normal).mean;
        for (c, samples) in g.configs.iter().zip(degraded) {
            let s = report::summarize(&samples);
            let row = Row {
                backend: spec.backend.name().into(),
                strategy: c.strategy.name().into(),
                k: c.k,
                m: c.m,
                q: c.q,
                chunk_bytes: c.chunk,
                packet_bytes: c.packet,
                helper_mbps: c.helper_bw,
                starter_mbps: c.starter_bw.unwrap_or(f64::INFINITY),
                hop_latency_s: spec.hop_latency,
                repetitions: spec.repetitions,
                mean_s: s.mean,
                min_s: s.min,
                max_s: s.max,
                normal_s: base,
                normalized: s.mean / base,
            };
            out.write(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}
