//! UCB scoring, selection bookkeeping, the learning update, and the three
//! fixed baseline strategies.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ClusterContext;
use crate::error::{Error, Result};
use crate::nn::{self, AdamState, NetworkWeights, WeightInit};
use crate::rng;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_LATENCY_BIN_MS: f64 = 10.0;

/// What a selection count is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterStrategy {
    /// Raw `(cpu, memory, latency bin)`: counts are shared by every node with
    /// a similar feature profile, across contexts.
    #[default]
    FeatureBucket,
    /// Node position within the context.
    ActionIndex,
}

impl fmt::Display for CounterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CounterStrategy::FeatureBucket => "feature-bucket",
            CounterStrategy::ActionIndex => "action-index",
        })
    }
}

/// Selection counts `k` behind the exploration bonus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCounter {
    pub strategy: CounterStrategy,
    pub latency_bin_ms: f64,
    counts: BTreeMap<String, u64>,
}

impl SelectionCounter {
    pub fn new(strategy: CounterStrategy, latency_bin_ms: f64) -> Result<Self> {
        if !(latency_bin_ms.is_finite() && latency_bin_ms > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "latency bin width must be positive, got {latency_bin_ms}"
            )));
        }
        Ok(Self {
            strategy,
            latency_bin_ms,
            counts: BTreeMap::new(),
        })
    }

    pub fn key(&self, context: &ClusterContext, index: usize) -> String {
        match self.strategy {
            CounterStrategy::ActionIndex => format!("a{index}"),
            CounterStrategy::FeatureBucket => {
                let n = &context.nodes()[index];
                let bin = (n.avg_latency_ms / self.latency_bin_ms).floor() as i64;
                format!("c{}/m{}/l{}", n.cpu_cores, n.memory_gb, bin)
            }
        }
    }

    pub fn count(&self, context: &ClusterContext, index: usize) -> u64 {
        self.counts
            .get(&self.key(context, index))
            .copied()
            .unwrap_or(0)
    }

    pub fn increment(&mut self, context: &ClusterContext, index: usize) {
        *self.counts.entry(self.key(context, index)).or_insert(0) += 1;
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// `alpha / sqrt(k + 1)`.
pub fn exploration_bonus(alpha: f64, count: u64) -> f64 {
    alpha / ((count as f64) + 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbScore {
    pub node_index: usize,
    pub exploitation: f64,
    pub exploration: f64,
    pub total: f64,
}

impl UcbScore {
    pub fn new(node_index: usize, exploitation: f64, exploration: f64) -> Self {
        Self {
            node_index,
            exploitation,
            exploration,
            total: exploitation + exploration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "NL-CPS")]
    NlCps,
    #[serde(rename = "HIGH-RES")]
    HighRes,
    #[serde(rename = "LOW-LATENCY")]
    LowLatency,
    #[serde(rename = "RANDOM")]
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NlCps,
        Strategy::HighRes,
        Strategy::LowLatency,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NlCps => "NL-CPS",
            Strategy::HighRes => "HIGH-RES",
            Strategy::LowLatency => "LOW-LATENCY",
            Strategy::Random => "RANDOM",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub strategy: Strategy,
    pub chosen_index: usize,
    pub chosen_node_id: String,
    /// Per-node scores behind the choice; empty for the rule-based baselines.
    pub all_scores: Vec<UcbScore>,
}

impl PlacementDecision {
    fn new(strategy: Strategy, context: &ClusterContext, index: usize, all_scores: Vec<UcbScore>) -> Self {
        Self {
            strategy,
            chosen_index: index,
            chosen_node_id: context.node_ids()[index].clone(),
            all_scores,
        }
    }
}

/// UCB score of every node: network prediction on the node's normalized
/// features plus the count-based bonus.
pub fn score_all(
    weights: &NetworkWeights,
    context: &ClusterContext,
    counter: &SelectionCounter,
    alpha: f64,
) -> Result<Vec<UcbScore>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let normalized = context.normalize()?;
    normalized
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let prediction = weights.forward(row)?;
            let bonus = exploration_bonus(alpha, counter.count(context, i));
            Ok(UcbScore::new(i, prediction, bonus))
        })
        .collect()
}

/// Network predictions only; the exploration term is zero.
pub fn score_exploit(weights: &NetworkWeights, context: &ClusterContext) -> Result<Vec<UcbScore>> {
    let normalized = context.normalize()?;
    normalized
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| Ok(UcbScore::new(i, weights.forward(row)?, 0.0)))
        .collect()
}

/// Index of the largest total; ties go to the lowest index.
pub fn argmax_total(scores: &[UcbScore]) -> Result<usize> {
    let (first, rest) = scores
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("cannot select from an empty score list".into()))?;
    let mut best = (0, first.total);
    for (i, s) in rest.iter().enumerate() {
        if s.total > best.1 {
            best = (i + 1, s.total);
        }
    }
    Ok(best.0)
}

pub fn select(
    scores: Vec<UcbScore>,
    context: &ClusterContext,
    strategy: Strategy,
) -> Result<PlacementDecision> {
    if scores.len() != context.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for a {}-node context",
            scores.len(),
            context.len()
        )));
    }
    let index = argmax_total(&scores)?;
    Ok(PlacementDecision::new(strategy, context, index, scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub counter_strategy: CounterStrategy,
    pub latency_bin_ms: f64,
    pub init: WeightInit,
    /// Optimizer steps taken on each observed reward.
    pub updates_per_step: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            learning_rate: nn::DEFAULT_LEARNING_RATE,
            counter_strategy: CounterStrategy::default(),
            latency_bin_ms: DEFAULT_LATENCY_BIN_MS,
            init: WeightInit::default(),
            updates_per_step: 1,
        }
    }
}

fn one() -> usize {
    1
}

/// Network, optimizer state and selection counts: everything a training run
/// mutates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub alpha: f64,
    pub weights: NetworkWeights,
    pub adam: AdamState,
    pub counter: SelectionCounter,
    #[serde(default = "one")]
    pub updates_per_step: usize,
}

impl Agent {
    pub fn new(config: &AgentConfig, architecture: &[usize], seed: u64) -> Result<Self> {
        if !(config.alpha.is_finite() && config.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", config.alpha)));
        }
        if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                config.learning_rate
            )));
        }
        if config.updates_per_step == 0 {
            return Err(Error::Config("updates_per_step must be >= 1".into()));
        }
        if architecture.first() != Some(&3) {
            return Err(Error::Config("network input width must be 3".into()));
        }
        let weights = NetworkWeights::init(architecture, config.init, seed)?;
        let adam = AdamState::new(&weights, config.learning_rate);
        Ok(Self {
            alpha: config.alpha,
            weights,
            adam,
            counter: SelectionCounter::new(config.counter_strategy, config.latency_bin_ms)?,
            updates_per_step: config.updates_per_step,
        })
    }

    pub fn scores(&self, context: &ClusterContext) -> Result<Vec<UcbScore>> {
        score_all(&self.weights, context, &self.counter, self.alpha)
    }

    /// Training-time choice: argmax of the UCB score.
    pub fn decide(&self, context: &ClusterContext) -> Result<PlacementDecision> {
        select(self.scores(context)?, context, Strategy::NlCps)
    }

    /// Deployment-time choice: argmax of the predicted reward alone.
    pub fn recommend(&self, context: &ClusterContext) -> Result<PlacementDecision> {
        select(score_exploit(&self.weights, context)?, context, Strategy::NlCps)
    }

    /// Fits the network toward `reward` on the chosen node's normalized
    /// features and bumps that node's selection count. Returns the squared
    /// error before the first optimizer step.
    pub fn update(
        &mut self,
        context: &ClusterContext,
        decision: &PlacementDecision,
        reward: f64,
    ) -> Result<f64> {
        if !reward.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite reward {reward}")));
        }
        let index = decision.chosen_index;
        if index >= context.len() {
            return Err(Error::InvalidAction {
                action: index,
                nodes: context.len(),
            });
        }
        let normalized = context.normalize()?;
        let x = &normalized.rows()[index];
        let loss = nn::train_step(&mut self.weights, &mut self.adam, x, reward)?;
        for _ in 1..self.updates_per_step {
            nn::train_step(&mut self.weights, &mut self.adam, x, reward)?;
        }
        self.counter.increment(context, index);
        Ok(loss)
    }
}

/// Most CPU cores, then most memory; lowest index among equals.
pub fn baseline_high_res(context: &ClusterContext) -> PlacementDecision {
    let nodes = context.nodes();
    let mut best = 0;
    for (i, n) in nodes.iter().enumerate().skip(1) {
        let b = &nodes[best];
        let ord = n
            .cpu_cores
            .cmp(&b.cpu_cores)
            .then(n.memory_gb.partial_cmp(&b.memory_gb).unwrap_or(Ordering::Equal));
        if ord == Ordering::Greater {
            best = i;
        }
    }
    PlacementDecision::new(Strategy::HighRes, context, best, Vec::new())
}

/// Lowest mean peer latency; lowest index among equals.
pub fn baseline_low_latency(context: &ClusterContext) -> PlacementDecision {
    let nodes = context.nodes();
    let mut best = 0;
    for (i, n) in nodes.iter().enumerate().skip(1) {
        if n.avg_latency_ms < nodes[best].avg_latency_ms {
            best = i;
        }
    }
    PlacementDecision::new(Strategy::LowLatency, context, best, Vec::new())
}

/// Uniformly random node, reproducible from `seed`.
pub fn baseline_random(context: &ClusterContext, seed: u64) -> PlacementDecision {
    let mut rng = rng::derived_rng(seed, rng::stream::RANDOM_BASELINE, 0);
    let index = rng.random_range(0..context.len());
    PlacementDecision::new(Strategy::Random, context, index, Vec::new())
}
