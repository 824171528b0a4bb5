//! Training loop against the synthetic environment, convergence statistics
//! and regret accounting.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig, CounterStrategy};
use crate::error::{Error, Result};
use crate::nn::WeightInit;
use crate::reward::RewardModelParams;
use crate::rng;
use crate::synth::{self, SynthModelParams, SyntheticDataset, SyntheticEnv, DEFAULT_CLUSTER_SIZES};

pub const DEFAULT_TIMESTEPS: usize = 10_000;
pub const DEFAULT_WINDOW: usize = 100;
/// Window used for the first/last-window convergence and regret summaries.
pub const SUMMARY_WINDOW: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// A fresh agent per cluster size.
    #[default]
    Independent,
    /// One agent trained on each size in turn.
    Continual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub timesteps: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
    pub init: WeightInit,
    /// Examples per optimizer step. Each environment step yields exactly one
    /// example, so only 1 is accepted.
    pub batch_size: usize,
    /// Optimizer steps per observed reward.
    pub updates_per_step: usize,
    pub cluster_sizes: Vec<usize>,
    pub dataset: Option<PathBuf>,
    pub seed: u64,
    pub counter_strategy: CounterStrategy,
    pub latency_bin_ms: f64,
    pub moving_average_window: usize,
    pub mode: TrainingMode,
    /// Environment noise on or off. Regret is always noiseless.
    pub noisy_rewards: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let agent = AgentConfig::default();
        Self {
            timesteps: DEFAULT_TIMESTEPS,
            alpha: agent.alpha,
            learning_rate: agent.learning_rate,
            hidden_layers: vec![256, 256, 128],
            init: agent.init,
            batch_size: 1,
            updates_per_step: agent.updates_per_step,
            cluster_sizes: DEFAULT_CLUSTER_SIZES.to_vec(),
            dataset: None,
            seed: 0,
            counter_strategy: agent.counter_strategy,
            latency_bin_ms: agent.latency_bin_ms,
            moving_average_window: DEFAULT_WINDOW,
            mode: TrainingMode::default(),
            noisy_rewards: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::Config("timesteps must be >= 1".into()));
        }
        if self.moving_average_window == 0 {
            return Err(Error::Config("moving_average_window must be >= 1".into()));
        }
        if self.cluster_sizes.is_empty() {
            return Err(Error::Config("cluster_sizes must not be empty".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!(
                "batch_size {} is not supported: training takes one example per step",
                self.batch_size
            )));
        }
        if self.updates_per_step == 0 {
            return Err(Error::Config("updates_per_step must be >= 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            counter_strategy: self.counter_strategy,
            latency_bin_ms: self.latency_bin_ms,
            init: self.init,
            updates_per_step: self.updates_per_step,
        }
    }

    /// `[3, hidden.., 1]`.
    pub fn architecture(&self) -> Vec<usize> {
        let mut a = vec![3];
        a.extend(&self.hidden_layers);
        a.push(1);
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub context_id: usize,
    pub action: usize,
    /// Reward returned by the environment (noisy when noise is on).
    pub reward: f64,
    /// Noiseless reward of the chosen node.
    pub expected_reward: f64,
    pub oracle_action: usize,
    pub oracle_reward: f64,
    /// Mean reward over the trailing window; `None` until the window fills.
    pub moving_avg: Option<f64>,
    /// Population variance over the trailing window.
    pub variance: Option<f64>,
}

impl TraceRecord {
    pub fn regret(&self) -> f64 {
        self.oracle_reward - self.expected_reward
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub cluster_size: usize,
    pub window: usize,
    pub records: Vec<TraceRecord>,
}

/// Mean and population variance.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Trailing-window mean and variance at every step; `None` while fewer than
/// `window` values have been seen.
pub fn windowed_stats(rewards: &[f64], window: usize) -> Vec<(Option<f64>, Option<f64>)> {
    (0..rewards.len())
        .map(|t| {
            if t + 1 < window {
                (None, None)
            } else {
                let (m, v) = mean_variance(&rewards[t + 1 - window..=t]);
                (Some(m), Some(v))
            }
        })
        .collect()
}

impl TrainingTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn summary(&self) -> Result<TraceSummary> {
        if self.records.is_empty() {
            return Err(Error::InvalidArgument("empty trace".into()));
        }
        let w = SUMMARY_WINDOW.min(self.records.len());
        let rewards = self.rewards();
        let (first_mean, first_var) = mean_variance(&rewards[..w]);
        let (last_mean, last_var) = mean_variance(&rewards[rewards.len() - w..]);
        let oracle: Vec<f64> = self.records[self.records.len() - w..]
            .iter()
            .map(|r| r.oracle_reward)
            .collect();
        let last_oracle = oracle.iter().sum::<f64>() / w as f64;
        let agreement = self.records[self.records.len() - w..]
            .iter()
            .filter(|r| r.action == r.oracle_action)
            .count() as f64
            / w as f64;
        Ok(TraceSummary {
            cluster_size: self.cluster_size,
            timesteps: self.records.len(),
            moving_average_window: self.window,
            summary_window: w,
            final_moving_average: self.records.last().and_then(|r| r.moving_avg),
            first_window_mean_reward: first_mean,
            last_window_mean_reward: last_mean,
            first_window_reward_variance: first_var,
            last_window_reward_variance: last_var,
            last_window_mean_regret: compute_regret(self, w)?,
            last_window_mean_oracle_reward: last_oracle,
            last_window_oracle_agreement: agreement,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub cluster_size: usize,
    pub timesteps: usize,
    pub moving_average_window: usize,
    pub summary_window: usize,
    pub final_moving_average: Option<f64>,
    pub first_window_mean_reward: f64,
    pub last_window_mean_reward: f64,
    pub first_window_reward_variance: f64,
    pub last_window_reward_variance: f64,
    pub last_window_mean_regret: f64,
    pub last_window_mean_oracle_reward: f64,
    pub last_window_oracle_agreement: f64,
}

/// Mean noiseless regret over the final `window` steps.
pub fn compute_regret(trace: &TrainingTrace, window: usize) -> Result<f64> {
    if window == 0 || trace.records.len() < window {
        return Err(Error::InvalidArgument(format!(
            "regret window {window} needs at least that many steps, trace has {}",
            trace.records.len()
        )));
    }
    let tail = &trace.records[trace.records.len() - window..];
    Ok(tail.iter().map(TraceRecord::regret).sum::<f64>() / window as f64)
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub cluster_size: usize,
    /// Agent state at the end of this size's run.
    pub agent: Agent,
    pub trace: TrainingTrace,
}

struct OracleEntry {
    best_index: usize,
    best_reward: f64,
    rewards: Vec<f64>,
}

/// Runs the configured training. Independent mode yields one fresh agent
/// per size; continual mode threads one agent through the sizes in order.
pub fn train(
    config: &TrainingConfig,
    dataset: &SyntheticDataset,
    synth: &SynthModelParams,
    reward: &RewardModelParams,
) -> Result<Vec<TrainingRun>> {
    config.validate()?;
    for &size in &config.cluster_sizes {
        if dataset.indices_of_size(size).is_empty() {
            return Err(Error::Config(format!(
                "dataset has no {size}-node configurations (has sizes {:?})",
                dataset.per_size_counts.keys().collect::<Vec<_>>()
            )));
        }
    }
    let architecture = config.architecture();
    let agent_config = config.agent_config();
    let mut runs = Vec::with_capacity(config.cluster_sizes.len());
    let mut carried: Option<Agent> = None;
    for &size in &config.cluster_sizes {
        let agent = match (config.mode, carried.take()) {
            (TrainingMode::Continual, Some(a)) => a,
            (TrainingMode::Continual, None) => Agent::new(
                &agent_config,
                &architecture,
                rng::derive_seed(config.seed, rng::stream::AGENT_INIT, 0),
            )?,
            (TrainingMode::Independent, _) => Agent::new(
                &agent_config,
                &architecture,
                rng::derive_seed(config.seed, rng::stream::AGENT_INIT, size as u64),
            )?,
        };
        let (agent, trace) = train_size(config, dataset, synth, reward, size, agent)?;
        if config.mode == TrainingMode::Continual {
            carried = Some(agent.clone());
        }
        runs.push(TrainingRun {
            cluster_size: size,
            agent,
            trace,
        });
    }
    Ok(runs)
}

/// `config.timesteps` steps of score / select / step / update on the
/// `size`-node slice of the dataset.
pub fn train_size(
    config: &TrainingConfig,
    dataset: &SyntheticDataset,
    synth: &SynthModelParams,
    reward: &RewardModelParams,
    size: usize,
    mut agent: Agent,
) -> Result<(Agent, TrainingTrace)> {
    config.validate()?;
    let mut env = SyntheticEnv::new(dataset, size, *synth, *reward, config.noisy_rewards, config.seed)?;
    let mut oracle: Vec<Option<OracleEntry>> = (0..dataset.len()).map(|_| None).collect();
    let mut records = Vec::with_capacity(config.timesteps);
    let mut rewards = Vec::with_capacity(config.timesteps);
    let window = config.moving_average_window;

    for step in 0..config.timesteps {
        let context = env.current_context();
        let context_id = env.current_id();
        let decision = agent.decide(context)?;
        let outcome = env.step(decision.chosen_index)?;
        agent.update(context, &decision, outcome.reward)?;

        let entry = match &mut oracle[context_id] {
            Some(e) => e,
            slot @ None => {
                let rewards = synth::expected_rewards(context, synth, reward)?;
                let (best_index, best_reward) = synth::oracle_best(context, synth, reward)?;
                slot.insert(OracleEntry {
                    best_index,
                    best_reward,
                    rewards,
                })
            }
        };

        rewards.push(outcome.reward);
        let (moving_avg, variance) = if rewards.len() >= window {
            let (m, v) = mean_variance(&rewards[rewards.len() - window..]);
            (Some(m), Some(v))
        } else {
            (None, None)
        };
        records.push(TraceRecord {
            step,
            context_id,
            action: decision.chosen_index,
            reward: outcome.reward,
            expected_reward: entry.rewards[decision.chosen_index],
            oracle_action: entry.best_index,
            oracle_reward: entry.best_reward,
            moving_avg,
            variance,
        });
    }
    Ok((
        agent,
        TrainingTrace {
            cluster_size: size,
            window,
            records,
        },
    ))
}
