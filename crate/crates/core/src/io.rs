//! File formats: node inventories, datasets, checkpoints, training traces,
//! summaries, reports and experiment configs.
//!
//! Every JSON document carries a `format_version` string that must match
//! exactly on read. Floats are written in shortest round-trip form, so a
//! written file re-parses to bit-identical values. Writes go to a temporary
//! file in the destination directory and are renamed into place.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{Agent, CounterStrategy, Strategy};
use crate::domain::{ClusterContext, NodeFeatures};
use crate::error::{Error, Result};
use crate::eval::{EvaluationReport, REPORT_VERSION};
use crate::reward::RewardModelParams;
use crate::synth::{SynthModelParams, SyntheticDataset};
use crate::training::{TraceRecord, TraceSummary, TrainingConfig, TrainingMode, TrainingTrace};

pub const DATASET_VERSION: &str = "nlcps-dataset/1";
pub const CHECKPOINT_VERSION: &str = "nlcps-checkpoint/1";
pub const SUMMARY_VERSION: &str = "nlcps-summary/1";
pub const CONFIG_VERSION: &str = "nlcps-config/1";

pub const TRACE_HEADER: &str =
    "step,context_id,action,reward,expected_reward,oracle_action,oracle_reward,moving_avg,variance";

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
/// Missing parent directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json_value(text: &str, path: &Path) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::parse(path, format!("invalid JSON: {e}")))
}

fn check_version(value: &Value, expected: &str, path: &Path) -> Result<()> {
    match value.get("format_version") {
        Some(Value::String(v)) if v == expected => Ok(()),
        Some(Value::String(v)) => Err(Error::UnsupportedVersion {
            expected: expected.to_string(),
            found: v.clone(),
        }),
        Some(other) => Err(Error::parse(path, format!("format_version must be a string, got {other}"))),
        None => Err(Error::parse(path, "missing format_version")),
    }
}

/// Reads a JSON document whose `format_version` must equal `expected`.
pub fn read_versioned<T: DeserializeOwned>(path: &Path, expected: &str) -> Result<T> {
    let text = read_text(path)?;
    parse_versioned(&text, expected, path)
}

pub fn parse_versioned<T: DeserializeOwned>(text: &str, expected: &str, path: &Path) -> Result<T> {
    let value = parse_json_value(text, path)?;
    check_version(&value, expected, path)?;
    serde_json::from_value(value).map_err(|e| Error::parse(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Inventories

/// A node inventory: the context plus optional display name and expected
/// selections per strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    pub name: Option<String>,
    pub context: ClusterContext,
    pub expected: BTreeMap<Strategy, String>,
}

pub fn load_inventory(path: &Path) -> Result<Inventory> {
    let text = read_text(path)?;
    parse_inventory(&text, path)
}

const INVENTORY_KEYS: [&str; 4] = ["name", "description", "expected", "nodes"];
const NODE_KEYS: [&str; 7] = [
    "id",
    "region",
    "provider",
    "cpu_cores",
    "memory_gb",
    "avg_latency_ms",
    "latencies_ms",
];

/// Parses `{"nodes": [{id, region?, cpu_cores, memory_gb, avg_latency_ms |
/// latencies_ms}]}`. A full latency row is reduced to its mean.
pub fn parse_inventory(text: &str, path: &Path) -> Result<Inventory> {
    let value = parse_json_value(text, path)?;
    let top = value
        .as_object()
        .ok_or_else(|| Error::parse(path, "inventory must be a JSON object"))?;
    if let Some(key) = top.keys().find(|k| !INVENTORY_KEYS.contains(&k.as_str())) {
        return Err(Error::parse(path, format!("unknown top-level field {key:?}")));
    }
    let name = match top.get("name") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Error::parse(path, "field \"name\" must be a string")),
    };
    let expected = parse_expectations(top.get("expected"), path)?;
    let nodes = top
        .get("nodes")
        .ok_or_else(|| Error::parse(path, "missing field \"nodes\""))?
        .as_array()
        .ok_or_else(|| Error::parse(path, "field \"nodes\" must be an array"))?;
    if nodes.is_empty() {
        return Err(Error::parse(path, "inventory lists no nodes"));
    }

    let mut features = Vec::with_capacity(nodes.len());
    let mut ids = Vec::with_capacity(nodes.len());
    let mut regions = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, node) in nodes.iter().enumerate() {
        let row = i + 1;
        let obj = node
            .as_object()
            .ok_or_else(|| Error::parse(path, format!("node row {row}: must be an object")))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => {
                return Err(Error::parse(path, format!("node row {row}: field \"id\" must be a non-empty string")))
            }
            None => return Err(Error::parse(path, format!("node row {row}: missing field \"id\""))),
        };
        let ctx = |msg: String| Error::parse(path, format!("node row {row} (id {id:?}): {msg}"));
        if let Some(prev) = seen.insert(id.clone(), row) {
            return Err(ctx(format!("duplicate node id {id:?} (first seen at row {prev})")));
        }
        if let Some(key) = obj.keys().find(|k| !NODE_KEYS.contains(&k.as_str())) {
            return Err(ctx(format!("unknown field {key:?}")));
        }
        let cpu = match obj.get("cpu_cores") {
            None => return Err(ctx("missing field \"cpu_cores\"".into())),
            Some(v) => v
                .as_u64()
                .filter(|c| *c > 0 && *c <= u64::from(u32::MAX))
                .ok_or_else(|| ctx(format!("field \"cpu_cores\" must be a positive integer, got {v}")))?
                as u32,
        };
        let memory = positive_number(obj, "memory_gb").map_err(ctx)?;
        let latency = match (obj.get("avg_latency_ms"), obj.get("latencies_ms")) {
            (Some(_), Some(_)) => {
                return Err(ctx("give either \"avg_latency_ms\" or \"latencies_ms\", not both".into()))
            }
            (Some(_), None) => positive_number(obj, "avg_latency_ms").map_err(ctx)?,
            (None, Some(v)) => mean_latency(v).map_err(ctx)?,
            (None, None) => return Err(ctx("missing field \"avg_latency_ms\" (or \"latencies_ms\")".into())),
        };
        match obj.get("region") {
            None => {}
            Some(Value::String(r)) => regions.push((i, r.clone())),
            Some(v) => return Err(ctx(format!("field \"region\" must be a string, got {v}"))),
        }
        if let Some(v) = obj.get("provider") {
            if !v.is_string() {
                return Err(ctx(format!("field \"provider\" must be a string, got {v}")));
            }
        }
        features.push(NodeFeatures {
            cpu_cores: cpu,
            memory_gb: memory,
            avg_latency_ms: latency,
        });
        ids.push(id);
    }
    let regions = match regions.len() {
        0 => Vec::new(),
        n if n == features.len() => regions.into_iter().map(|(_, r)| r).collect(),
        _ => {
            let missing = (0..features.len())
                .find(|i| !regions.iter().any(|(j, _)| j == i))
                .map_or(0, |i| i + 1);
            return Err(Error::parse(
                path,
                format!("node row {missing}: \"region\" must be given for every node or none"),
            ));
        }
    };
    let context =
        ClusterContext::new(features, ids, regions).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(Inventory {
        name,
        context,
        expected,
    })
}

fn positive_number(obj: &Map<String, Value>, field: &str) -> std::result::Result<f64, String> {
    let v = obj.get(field).ok_or_else(|| format!("missing field {field:?}"))?;
    v.as_f64()
        .filter(|x| x.is_finite() && *x > 0.0)
        .ok_or_else(|| format!("field {field:?} must be a positive number, got {v}"))
}

fn mean_latency(v: &Value) -> std::result::Result<f64, String> {
    let row = v
        .as_array()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| "field \"latencies_ms\" must be a non-empty array".to_string())?;
    let mut sum = 0.0;
    for (k, x) in row.iter().enumerate() {
        let ms = x
            .as_f64()
            .filter(|m| m.is_finite() && *m > 0.0)
            .ok_or_else(|| format!("latencies_ms[{k}] must be a positive number, got {x}"))?;
        sum += ms;
    }
    Ok(sum / row.len() as f64)
}

fn parse_expectations(v: Option<&Value>, path: &Path) -> Result<BTreeMap<Strategy, String>> {
    let mut out = BTreeMap::new();
    let Some(v) = v else { return Ok(out) };
    let obj = v
        .as_object()
        .ok_or_else(|| Error::parse(path, "field \"expected\" must be an object"))?;
    for (k, id) in obj {
        let strategy: Strategy = k
            .parse()
            .map_err(|_| Error::parse(path, format!("expected: unknown strategy {k:?}")))?;
        let id = id
            .as_str()
            .ok_or_else(|| Error::parse(path, format!("expected.{k} must be a node id string")))?;
        out.insert(strategy, id.to_string());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format_version: String,
    generator_version: String,
    seed: u64,
    per_size_counts: BTreeMap<usize, usize>,
    configurations: Vec<ClusterContext>,
}

pub fn dataset_to_json(dataset: &SyntheticDataset) -> Result<String> {
    let file = DatasetFile {
        format_version: DATASET_VERSION.to_string(),
        generator_version: dataset.generator_version.clone(),
        seed: dataset.seed,
        per_size_counts: dataset.per_size_counts.clone(),
        configurations: dataset.configurations.clone(),
    };
    let mut s = serde_json::to_string(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn dataset_from_json(text: &str, path: &Path) -> Result<SyntheticDataset> {
    let file: DatasetFile = parse_versioned(text, DATASET_VERSION, path)?;
    let mut counts = BTreeMap::new();
    for c in &file.configurations {
        *counts.entry(c.len()).or_insert(0usize) += 1;
    }
    if counts != file.per_size_counts {
        return Err(Error::parse(
            path,
            format!(
                "per_size_counts {:?} disagree with configurations {:?}",
                file.per_size_counts, counts
            ),
        ));
    }
    Ok(SyntheticDataset {
        generator_version: file.generator_version,
        seed: file.seed,
        per_size_counts: file.per_size_counts,
        configurations: file.configurations,
    })
}

pub fn save_dataset(path: &Path, dataset: &SyntheticDataset) -> Result<()> {
    write_atomic(path, dataset_to_json(dataset)?.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<SyntheticDataset> {
    dataset_from_json(&read_text(path)?, path)
}

// ---------------------------------------------------------------------------
// Checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMetadata {
    /// Sizes this agent was trained on, in order.
    pub cluster_sizes: Vec<usize>,
    pub mode: TrainingMode,
    pub timesteps_per_size: usize,
    pub seed: u64,
    pub counter_strategy: CounterStrategy,
    pub dataset_seed: u64,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: String,
    pub metadata: CheckpointMetadata,
    pub agent: Agent,
}

impl Checkpoint {
    pub fn new(metadata: CheckpointMetadata, agent: Agent) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION.to_string(),
            metadata,
            agent,
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let w = &self.agent.weights;
        crate::nn::NetworkWeights::from_layers(w.layers().to_vec())
            .map_err(|e| Error::parse(path, format!("weights: {e}")))?;
        if w.input_dim() != 3 {
            return Err(Error::parse(path, "network input width must be 3"));
        }
        let adam = &self.agent.adam;
        if !w.same_shape(&adam.first_moment) || !w.same_shape(&adam.second_moment) {
            return Err(Error::parse(path, "optimizer moments do not match the weight shapes"));
        }
        if !(self.agent.alpha.is_finite() && self.agent.alpha > 0.0) {
            return Err(Error::parse(path, "alpha must be positive"));
        }
        Ok(())
    }
}

pub fn checkpoint_to_json(checkpoint: &Checkpoint) -> Result<String> {
    let mut s = serde_json::to_string(checkpoint)?;
    s.push('\n');
    Ok(s)
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, checkpoint_to_json(checkpoint)?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ck: Checkpoint = read_versioned(path, CHECKPOINT_VERSION)?;
    ck.validate(path)?;
    Ok(ck)
}

// ---------------------------------------------------------------------------
// Traces

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

pub fn trace_to_csv(trace: &TrainingTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 96);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.context_id,
            r.action,
            r.reward,
            r.expected_reward,
            r.oracle_action,
            r.oracle_reward,
            opt_f64(r.moving_avg),
            opt_f64(r.variance),
        ));
    }
    out
}

/// Parses a trace CSV. `cluster_size` and `window` are not stored per row
/// and must be supplied by the caller (they live in the summary file).
pub fn trace_from_csv(text: &str, path: &Path, cluster_size: usize, window: usize) -> Result<TrainingTrace> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TRACE_HEADER => {}
        Some(h) => {
            return Err(Error::parse(
                path,
                format!("unrecognized trace header {h:?} (expected {TRACE_HEADER:?})"),
            ))
        }
        None => return Err(Error::parse(path, "empty trace file")),
    }
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != 9 {
            return Err(Error::parse(path, format!("line {row}: expected 9 columns, got {}", cells.len())));
        }
        let int = |j: usize| -> Result<usize> {
            cells[j]
                .parse()
                .map_err(|_| Error::parse(path, format!("line {row}: column {} is not an integer", j + 1)))
        };
        let float = |j: usize| -> Result<f64> {
            cells[j]
                .parse()
                .map_err(|_| Error::parse(path, format!("line {row}: column {} is not a number", j + 1)))
        };
        let optional = |j: usize| -> Result<Option<f64>> {
            let x = float(j)?;
            Ok(if x.is_nan() { None } else { Some(x) })
        };
        records.push(TraceRecord {
            step: int(0)?,
            context_id: int(1)?,
            action: int(2)?,
            reward: float(3)?,
            expected_reward: float(4)?,
            oracle_action: int(5)?,
            oracle_reward: float(6)?,
            moving_avg: optional(7)?,
            variance: optional(8)?,
        });
    }
    Ok(TrainingTrace {
        cluster_size,
        window,
        records,
    })
}

pub fn save_trace(path: &Path, trace: &TrainingTrace) -> Result<()> {
    write_atomic(path, trace_to_csv(trace).as_bytes())
}

pub fn load_trace(path: &Path, cluster_size: usize, window: usize) -> Result<TrainingTrace> {
    trace_from_csv(&read_text(path)?, path, cluster_size, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryFile {
    pub format_version: String,
    pub seed: u64,
    pub mode: TrainingMode,
    pub counter_strategy: CounterStrategy,
    pub alpha: f64,
    pub learning_rate: f64,
    pub trace_file: String,
    pub checkpoint_file: String,
    pub summary: TraceSummary,
}

pub fn load_summary(path: &Path) -> Result<SummaryFile> {
    read_versioned(path, SUMMARY_VERSION)
}

// ---------------------------------------------------------------------------
// Reports

pub fn save_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    write_json(path, report)
}

pub fn load_report(path: &Path) -> Result<EvaluationReport> {
    read_versioned(path, REPORT_VERSION)
}

// ---------------------------------------------------------------------------
// Experiment config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: String,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub reward: RewardModelParams,
    #[serde(default)]
    pub synth: SynthModelParams,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION.to_string(),
            training: TrainingConfig::default(),
            reward: RewardModelParams::default(),
            synth: SynthModelParams::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.reward.validate()?;
        self.synth.validate()
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = parse_versioned(text, CONFIG_VERSION, path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&read_text(path)?, path)
}
