//! Shared domain types: per-node features, cluster contexts, min-max
//! normalization and the six-metric performance profile.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CPU tiers used for synthetic generation.
pub const SYNTHETIC_CPU_CORES: [u32; 3] = [1, 2, 4];
/// Memory tiers (GB) used for synthetic generation.
pub const SYNTHETIC_MEMORY_GB: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Average peer latency range (ms) used for synthetic generation.
pub const SYNTHETIC_LATENCY_MS: (f64, f64) = (10.0, 150.0);

/// Context triple for one node: CPU cores, memory and mean round-trip
/// latency to all peers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub cpu_cores: u32,
    pub memory_gb: f64,
    pub avg_latency_ms: f64,
}

impl NodeFeatures {
    pub fn new(cpu_cores: u32, memory_gb: f64, avg_latency_ms: f64) -> Result<Self> {
        let node = Self {
            cpu_cores,
            memory_gb,
            avg_latency_ms,
        };
        node.validate()?;
        Ok(node)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cpu_cores == 0 {
            return Err(Error::InvalidContext("cpu_cores must be positive".into()));
        }
        if !(self.memory_gb.is_finite() && self.memory_gb > 0.0) {
            return Err(Error::InvalidContext(format!(
                "memory_gb must be positive and finite, got {}",
                self.memory_gb
            )));
        }
        if !(self.avg_latency_ms.is_finite() && self.avg_latency_ms > 0.0) {
            return Err(Error::InvalidContext(format!(
                "avg_latency_ms must be positive and finite, got {}",
                self.avg_latency_ms
            )));
        }
        Ok(())
    }

    /// Whether the node lies inside the synthetic feature domain.
    pub fn in_synthetic_range(&self) -> bool {
        SYNTHETIC_CPU_CORES.contains(&self.cpu_cores)
            && SYNTHETIC_MEMORY_GB.contains(&self.memory_gb)
            && (SYNTHETIC_LATENCY_MS.0..=SYNTHETIC_LATENCY_MS.1).contains(&self.avg_latency_ms)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [
            f64::from(self.cpu_cores),
            self.memory_gb,
            self.avg_latency_ms,
        ]
    }
}

/// An ordered set of candidate nodes. Action `i` places the control plane on
/// `nodes[i]`; order is the inventory order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawContext", into = "RawContext")]
pub struct ClusterContext {
    nodes: Vec<NodeFeatures>,
    node_ids: Vec<String>,
    regions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContext {
    node_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    regions: Vec<String>,
    nodes: Vec<NodeFeatures>,
}

impl TryFrom<RawContext> for ClusterContext {
    type Error = Error;

    fn try_from(raw: RawContext) -> Result<Self> {
        ClusterContext::new(raw.nodes, raw.node_ids, raw.regions)
    }
}

impl From<ClusterContext> for RawContext {
    fn from(ctx: ClusterContext) -> Self {
        RawContext {
            node_ids: ctx.node_ids,
            regions: ctx.regions,
            nodes: ctx.nodes,
        }
    }
}

impl ClusterContext {
    /// Builds a validated context. `regions` may be empty; otherwise it must
    /// be parallel to `nodes`.
    ///
    /// Single-node contexts are representable (an inventory may list one
    /// machine) but cannot be normalized.
    pub fn new(nodes: Vec<NodeFeatures>, node_ids: Vec<String>, regions: Vec<String>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidContext("context has no nodes".into()));
        }
        if nodes.len() != node_ids.len() {
            return Err(Error::InvalidContext(format!(
                "{} nodes but {} node ids",
                nodes.len(),
                node_ids.len()
            )));
        }
        if !regions.is_empty() && regions.len() != nodes.len() {
            return Err(Error::InvalidContext(format!(
                "{} nodes but {} regions",
                nodes.len(),
                regions.len()
            )));
        }
        let mut seen = HashSet::with_capacity(node_ids.len());
        for id in &node_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidContext(format!("duplicate node id {id:?}")));
            }
        }
        for (node, id) in nodes.iter().zip(&node_ids) {
            node.validate()
                .map_err(|e| Error::InvalidContext(format!("node {id:?}: {e}")))?;
        }
        Ok(Self {
            nodes,
            node_ids,
            regions,
        })
    }

    /// Context with generated ids `node1..nodeN` and no regions.
    pub fn from_features(nodes: Vec<NodeFeatures>) -> Result<Self> {
        let ids = (1..=nodes.len()).map(|i| format!("node{i}")).collect();
        Self::new(nodes, ids, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeFeatures] {
        &self.nodes
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn node(&self, index: usize) -> Option<&NodeFeatures> {
        self.nodes.get(index)
    }

    pub fn node_id(&self, index: usize) -> Option<&str> {
        self.node_ids.get(index).map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    /// Row-major `[c1, m1, l1, c2, ...]`, length `3N`.
    pub fn flatten(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(NodeFeatures::as_array).collect()
    }

    /// Per-column min-max scaling within this cluster instance.
    ///
    /// A column where every node has the same value carries no ranking
    /// information and maps to 0.5.
    pub fn normalize(&self) -> Result<NormalizedFeatures> {
        if self.nodes.len() < 2 {
            return Err(Error::InvalidContext(format!(
                "normalization needs at least 2 nodes, got {}",
                self.nodes.len()
            )));
        }
        let rows: Vec<[f64; 3]> = self.nodes.iter().map(NodeFeatures::as_array).collect();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for row in &rows {
            for j in 0..3 {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        let values = rows
            .iter()
            .map(|row| {
                let mut out = [0.0; 3];
                for j in 0..3 {
                    out[j] = scale(row[j], lo[j], hi[j]);
                }
                out
            })
            .collect();
        Ok(NormalizedFeatures { values })
    }
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Min-max scaled features, one `[cpu, memory, latency]` triple per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFeatures {
    values: Vec<[f64; 3]>,
}

impl NormalizedFeatures {
    pub fn rows(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn row(&self, index: usize) -> Option<&[f64; 3]> {
        self.values.get(index)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Operational metrics of a candidate control-plane host.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceProfile {
    /// API server response latency, ms.
    pub api_latency_ms: f64,
    /// Control-plane node CPU utilisation, percent.
    pub cpu_util_pct: f64,
    /// Control-plane node memory utilisation, percent.
    pub mem_util_pct: f64,
    /// Pod creation throughput, pods/minute.
    pub pod_throughput_ppm: f64,
    /// Mean pod creation latency, seconds.
    pub pod_latency_s: f64,
    /// Fraction of pods reaching running state.
    pub success_rate: f64,
}

impl PerformanceProfile {
    pub fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("api_latency_ms", self.api_latency_ms),
            ("cpu_util_pct", self.cpu_util_pct),
            ("mem_util_pct", self.mem_util_pct),
            ("pod_throughput_ppm", self.pod_throughput_ppm),
            ("pod_latency_s", self.pod_latency_s),
            ("success_rate", self.success_rate),
        ]
    }

    /// Checks finiteness and the documented ranges.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(Error::InvalidProfile(format!("{name} is not finite ({v})")));
            }
        }
        let in_range = self.api_latency_ms >= 0.0
            && (0.0..=100.0).contains(&self.cpu_util_pct)
            && (0.0..=100.0).contains(&self.mem_util_pct)
            && self.pod_throughput_ppm >= 0.0
            && self.pod_latency_s >= 0.0
            && (0.0..=1.0).contains(&self.success_rate);
        if !in_range {
            return Err(Error::InvalidProfile(format!("field out of range: {self:?}")));
        }
        Ok(())
    }
}
