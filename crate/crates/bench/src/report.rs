//! CSV rows and strategy comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

/// One configuration's measurements. Bandwidths in Mbit/s, `inf` when
/// unconstrained; times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub backend: String,
    pub strategy: String,
    pub k: usize,
    pub m: usize,
    pub q: usize,
    pub chunk_bytes: usize,
    pub packet_bytes: usize,
    pub helper_mbps: f64,
    pub starter_mbps: f64,
    pub hop_latency_s: f64,
    pub repetitions: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub normal_s: f64,
    pub normalized: f64,
}

impl Row {
    /// Everything but strategy, q and the measurements.
    fn setting(&self) -> Setting {
        Setting {
            backend: self.backend.clone(),
            k: self.k,
            m: self.m,
            chunk: self.chunk_bytes,
            packet: self.packet_bytes,
            helper: self.helper_mbps.to_bits(),
            starter: self.starter_mbps.to_bits(),
            hop: self.hop_latency_s.to_bits(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Setting {
    backend: String,
    k: usize,
    m: usize,
    chunk: usize,
    packet: usize,
    helper: u64,
    starter: u64,
    hop: u64,
}

pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(samples: &[f64]) -> Summary {
    let n = samples.len().max(1) as f64;
    Summary {
        mean: samples.iter().sum::<f64>() / n,
        min: samples.iter().cloned().fold(f64::INFINITY, f64::min),
        max: samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Writes rows as they arrive and flushes each one.
pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(w: W) -> Self {
        RowWriter { inner: csv::Writer::from_writer(w) }
    }

    pub fn write(&mut self, row: &Row) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| BenchError::Io(e.into_error()))
    }
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<Row>> {
    csv::Reader::from_reader(r).deserialize().map(|r| r.map_err(BenchError::from)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub row: Row,
    /// Mean latency over the ECPipe mean of the same setting.
    pub vs_ecpipe: f64,
    /// Mean latency over the normal-read mean.
    pub vs_normal: f64,
}

/// Ratios of every row against the ECPipe row of the same setting.
pub fn compare(rows: &[Row]) -> Result<Vec<Comparison>> {
    let mut strategies: Vec<&str> = rows.iter().map(|r| r.strategy.as_str()).collect();
    strategies.sort_unstable();
    strategies.dedup();
    if strategies.len() < 2 {
        return Err(BenchError::Compare(format!("need at least two strategies, found {strategies:?}")));
    }
    let mut by_setting: BTreeMap<Setting, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_setting.entry(r.setting()).or_default().push(r);
    }
    let mut out = Vec::with_capacity(rows.len());
    for (s, group) in by_setting {
        let base = group.iter().find(|r| r.strategy == "ecpipe").ok_or_else(|| {
            BenchError::Compare(format!(
                "no ecpipe row for RS({},{}) chunk {} packet {} on {}",
                s.k, s.m, s.chunk, s.packet, s.backend
            ))
        })?;
        for r in &group {
            out.push(Comparison {
                row: (*r).clone(),
                vs_ecpipe: r.mean_s / base.mean_s,
                vs_normal: r.mean_s / r.normal_s,
            });
        }
    }
    Ok(out)
}

pub fn format_table(cmp: &[Comparison]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<15} {:>7} {:>3} {:>10} {:>8} {:>7} {:>10} {:>10} {:>9}",
        "backend", "strategy", "code", "q", "chunk", "packet", "helper", "mean_s", "vs_ecpipe", "vs_normal"
    );
    for c in cmp {
        let r = &c.row;
        let _ = writeln!(
            s,
            "{:<10} {:<15} {:>7} {:>3} {:>10} {:>8} {:>7} {:>10.4} {:>10.3} {:>9.3}",
            r.backend,
            r.strategy,
            format!("{},{}", r.k, r.m),
            r.q,
            r.chunk_bytes,
            r.packet_bytes,
            r.helper_mbps,
            r.mean_s,
            c.vs_ecpipe,
            c.vs_normal
        );
    }
    s
}
