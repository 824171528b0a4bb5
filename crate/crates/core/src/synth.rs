//! Calibrated synthetic performance model, dataset generation and the
//! single-step training environment.
//!
//! Every metric is driven by a saturating resource factor
//!
//! ```text
//! g(c, m) = c / (c + kc) * m / (m + km)
//! ```
//!
//! which rises with both CPU cores and memory and flattens out for large
//! hosts. From it:
//!
//! ```text
//! throughput  = T0 * g * max(0, 1 - att * (latency - latency_ref))
//! api_latency = A0 / g + a_net * latency
//! cpu_util    = min(100, cpu_load / c)
//! mem_util    = min(100, mem_load / m)
//! pod_latency = pod_work / max(throughput, 1)
//! failure     = 0                      if g >= floor
//!             = lerp(lo, hi) on [g(1,1), floor]  otherwise
//! ```
//!
//! Defaults put 1-core / 1-GB hosts over both utilisation thresholds and
//! 4-core / 8-GB hosts well under them, and rank the 12- and 18-node
//! evaluation inventories so that the lowest-latency 4-core / 8-GB node is
//! the oracle choice.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ClusterContext, NodeFeatures, PerformanceProfile, SYNTHETIC_CPU_CORES, SYNTHETIC_LATENCY_MS,
    SYNTHETIC_MEMORY_GB,
};
use crate::error::{Error, Result};
use crate::reward::{compute_reward, RewardModelParams};
use crate::rng;

pub const GENERATOR_VERSION: &str = "nlcps-synth/1";
pub const DEFAULT_CLUSTER_SIZES: [usize; 4] = [5, 8, 10, 12];
pub const DEFAULT_PER_SIZE: usize = 200;

/// Standard deviations of the Gaussian noise added to each metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSigmas {
    pub api_latency_ms: f64,
    pub cpu_util_pct: f64,
    pub mem_util_pct: f64,
    pub pod_throughput_ppm: f64,
    pub pod_latency_s: f64,
    pub success_rate: f64,
}

impl Default for NoiseSigmas {
    fn default() -> Self {
        Self {
            api_latency_ms: 1.0,
            cpu_util_pct: 2.0,
            mem_util_pct: 2.0,
            pod_throughput_ppm: 10.0,
            pod_latency_s: 0.05,
            success_rate: 0.02,
        }
    }
}

impl NoiseSigmas {
    fn as_array(&self) -> [f64; 6] {
        [
            self.api_latency_ms,
            self.cpu_util_pct,
            self.mem_util_pct,
            self.pod_throughput_ppm,
            self.pod_latency_s,
            self.success_rate,
        ]
    }

    pub fn zero() -> Self {
        Self {
            api_latency_ms: 0.0,
            cpu_util_pct: 0.0,
            mem_util_pct: 0.0,
            pod_throughput_ppm: 0.0,
            pod_latency_s: 0.0,
            success_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthModelParams {
    /// Throughput of a hypothetical host with `g = 1` and reference latency.
    pub throughput_base_ppm: f64,
    /// CPU half-saturation constant `kc` of the resource factor.
    pub throughput_cpu_coeff: f64,
    /// Memory half-saturation constant `km` of the resource factor.
    pub throughput_mem_coeff: f64,
    /// Fractional throughput loss per ms above `latency_reference_ms`.
    pub latency_attenuation: f64,
    pub latency_reference_ms: f64,
    pub api_latency_base_ms: f64,
    pub api_latency_net_coeff: f64,
    /// Control-plane CPU work; utilisation is `cpu_load / cores`.
    pub cpu_load: f64,
    /// Control-plane memory footprint; utilisation is `mem_load / gb`.
    pub mem_load: f64,
    /// Pod latency is `pod_work / throughput`.
    pub pod_work: f64,
    /// Resource factor at and above which deployments never fail.
    pub failure_resource_floor: f64,
    /// Failure probability range for hosts below the floor.
    pub failure_low_resource_range: (f64, f64),
    pub noise: NoiseSigmas,
}

impl Default for SynthModelParams {
    fn default() -> Self {
        Self {
            throughput_base_ppm: 1200.0,
            throughput_cpu_coeff: 2.0,
            throughput_mem_coeff: 4.0,
            latency_attenuation: 0.0015,
            latency_reference_ms: 10.0,
            api_latency_base_ms: 5.0,
            api_latency_net_coeff: 0.1,
            cpu_load: 160.0,
            mem_load: 180.0,
            pod_work: 600.0,
            failure_resource_floor: 0.2,
            failure_low_resource_range: (0.20, 0.60),
            noise: NoiseSigmas::default(),
        }
    }
}

impl SynthModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.throughput_base_ppm,
            self.throughput_cpu_coeff,
            self.throughput_mem_coeff,
            self.latency_attenuation,
            self.latency_reference_ms,
            self.api_latency_base_ms,
            self.api_latency_net_coeff,
            self.cpu_load,
            self.mem_load,
            self.pod_work,
            self.failure_resource_floor,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("synth coefficients must be finite and >= 0".into()));
        }
        if self.throughput_cpu_coeff <= 0.0 || self.throughput_mem_coeff <= 0.0 {
            return Err(Error::Config("synth saturation constants must be > 0".into()));
        }
        let (lo, hi) = self.failure_low_resource_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!(
                "synth.failure_low_resource_range must be an ordered sub-range of [0, 1], got ({lo}, {hi})"
            )));
        }
        if self
            .noise
            .as_array()
            .iter()
            .any(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(Error::Config("synth noise sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Saturating resource factor `g(c, m)`.
    pub fn resource_factor(&self, cpu_cores: f64, memory_gb: f64) -> f64 {
        cpu_cores / (cpu_cores + self.throughput_cpu_coeff)
            * (memory_gb / (memory_gb + self.throughput_mem_coeff))
    }

    /// Deployment failure probability for a host with resource factor `g`.
    pub fn failure_probability(&self, g: f64) -> f64 {
        let floor = self.failure_resource_floor;
        if g >= floor {
            return 0.0;
        }
        let (lo, hi) = self.failure_low_resource_range;
        let g_min = self.resource_factor(
            f64::from(SYNTHETIC_CPU_CORES[0]),
            SYNTHETIC_MEMORY_GB[0],
        );
        if floor <= g_min {
            return hi;
        }
        let t = ((floor - g) / (floor - g_min)).clamp(0.0, 1.0);
        lo + (hi - lo) * t
    }
}

/// Noiseless metrics for one host.
pub fn expected_profile(node: &NodeFeatures, params: &SynthModelParams) -> PerformanceProfile {
    let c = f64::from(node.cpu_cores);
    let m = node.memory_gb;
    let latency = node.avg_latency_ms;
    let g = params.resource_factor(c, m);

    let attenuation =
        (1.0 - params.latency_attenuation * (latency - params.latency_reference_ms)).clamp(0.0, 1.0);
    let throughput = params.throughput_base_ppm * g * attenuation;
    let api_latency = params.api_latency_base_ms / g + params.api_latency_net_coeff * latency;

    PerformanceProfile {
        api_latency_ms: api_latency,
        cpu_util_pct: (params.cpu_load / c).min(100.0),
        mem_util_pct: (params.mem_load / m).min(100.0),
        pod_throughput_ppm: throughput,
        pod_latency_s: params.pod_work / throughput.max(1.0),
        success_rate: 1.0 - params.failure_probability(g),
    }
}

/// Metrics for one host, optionally perturbed with per-metric Gaussian noise
/// and clamped back into each field's legal range.
///
/// Noisy calls always draw six standard normals from `rng`, so the stream
/// position does not depend on the sigmas.
pub fn predict_profile(
    node: &NodeFeatures,
    params: &SynthModelParams,
    noisy: bool,
    rng: &mut impl Rng,
) -> PerformanceProfile {
    let base = expected_profile(node, params);
    if !noisy {
        return base;
    }
    let sigma = params.noise.as_array();
    let mut eps = [0.0; 6];
    for (e, s) in eps.iter_mut().zip(sigma) {
        let z: f64 = rng.sample(StandardNormal);
        *e = s * z;
    }
    PerformanceProfile {
        api_latency_ms: (base.api_latency_ms + eps[0]).max(0.0),
        cpu_util_pct: (base.cpu_util_pct + eps[1]).clamp(0.0, 100.0),
        mem_util_pct: (base.mem_util_pct + eps[2]).clamp(0.0, 100.0),
        pod_throughput_ppm: (base.pod_throughput_ppm + eps[3]).max(0.0),
        pod_latency_s: (base.pod_latency_s + eps[4]).max(0.0),
        success_rate: (base.success_rate + eps[5]).clamp(0.0, 1.0),
    }
}

/// Noiseless reward of every node in `context`, in node order.
pub fn expected_rewards(
    context: &ClusterContext,
    synth: &SynthModelParams,
    reward: &RewardModelParams,
) -> Result<Vec<f64>> {
    context
        .nodes()
        .iter()
        .map(|n| compute_reward(&expected_profile(n, synth), reward))
        .collect()
}

/// Exhaustive argmax of the noiseless reward; ties go to the lowest index.
pub fn oracle_best(
    context: &ClusterContext,
    synth: &SynthModelParams,
    reward: &RewardModelParams,
) -> Result<(usize, f64)> {
    let rewards = expected_rewards(context, synth, reward)?;
    let mut best = (0, rewards[0]);
    for (i, &r) in rewards.iter().enumerate().skip(1) {
        if r > best.1 {
            best = (i, r);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub generator_version: String,
    pub seed: u64,
    pub per_size_counts: BTreeMap<usize, usize>,
    pub configurations: Vec<ClusterContext>,
}

impl SyntheticDataset {
    /// Dataset indices of every configuration with `size` nodes.
    pub fn indices_of_size(&self, size: usize) -> Vec<usize> {
        self.configurations
            .iter()
            .enumerate()
            .filter(|(_, c)| c.len() == size)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }
}

/// Samples `per_size` clusters for each entry of `sizes`. CPU and memory are
/// drawn uniformly from their tiers, latency uniformly on `[10, 150]` ms.
pub fn generate_dataset(sizes: &[usize], per_size: usize, seed: u64) -> Result<SyntheticDataset> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("at least one cluster size is required".into()));
    }
    if per_size == 0 {
        return Err(Error::InvalidArgument("per-size count must be >= 1".into()));
    }
    if let Some(s) = sizes.iter().find(|&&s| s < 2) {
        return Err(Error::InvalidArgument(format!("cluster size must be >= 2, got {s}")));
    }

    let mut rng = rng::derived_rng(seed, rng::stream::DATASET, 0);
    let mut configurations = Vec::with_capacity(sizes.len() * per_size);
    let mut per_size_counts = BTreeMap::new();
    for &size in sizes {
        for _ in 0..per_size {
            configurations.push(sample_context(size, &mut rng)?);
        }
        *per_size_counts.entry(size).or_insert(0) += per_size;
    }
    Ok(SyntheticDataset {
        generator_version: GENERATOR_VERSION.to_string(),
        seed,
        per_size_counts,
        configurations,
    })
}

fn sample_context(size: usize, rng: &mut ChaCha8Rng) -> Result<ClusterContext> {
    let (lat_lo, lat_hi) = SYNTHETIC_LATENCY_MS;
    let nodes = (0..size)
        .map(|_| {
            let cpu = SYNTHETIC_CPU_CORES[rng.random_range(0..SYNTHETIC_CPU_CORES.len())];
            let mem = SYNTHETIC_MEMORY_GB[rng.random_range(0..SYNTHETIC_MEMORY_GB.len())];
            let lat = rng.random_range(lat_lo..=lat_hi);
            NodeFeatures {
                cpu_cores: cpu,
                memory_gb: mem,
                avg_latency_ms: lat,
            }
        })
        .collect();
    ClusterContext::from_features(nodes)
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Dataset index of the context the action was taken in.
    pub context_id: usize,
    pub reward: f64,
    pub profile: PerformanceProfile,
}

/// Single-step episodic environment over a slice of a dataset: each step
/// scores the chosen node of the current context, then samples the next
/// context uniformly with replacement.
#[derive(Debug)]
pub struct SyntheticEnv<'a> {
    dataset: &'a SyntheticDataset,
    slice: Vec<usize>,
    synth: SynthModelParams,
    reward: RewardModelParams,
    noisy: bool,
    sampler: ChaCha8Rng,
    noise: ChaCha8Rng,
    current: usize,
}

impl<'a> SyntheticEnv<'a> {
    /// Environment over the configurations with `size` nodes.
    pub fn new(
        dataset: &'a SyntheticDataset,
        size: usize,
        synth: SynthModelParams,
        reward: RewardModelParams,
        noisy: bool,
        seed: u64,
    ) -> Result<Self> {
        let slice = dataset.indices_of_size(size);
        if slice.is_empty() {
            return Err(Error::Config(format!(
                "dataset has no {size}-node configurations"
            )));
        }
        let mut sampler = rng::derived_rng(seed, rng::stream::CONTEXT_SAMPLING, size as u64);
        let noise = rng::derived_rng(seed, rng::stream::ENV_NOISE, size as u64);
        let current = slice[sampler.random_range(0..slice.len())];
        Ok(Self {
            dataset,
            slice,
            synth,
            reward,
            noisy,
            sampler,
            noise,
            current,
        })
    }

    pub fn current_id(&self) -> usize {
        self.current
    }

    pub fn current_context(&self) -> &'a ClusterContext {
        &self.dataset.configurations[self.current]
    }

    pub fn synth(&self) -> &SynthModelParams {
        &self.synth
    }

    pub fn reward_params(&self) -> &RewardModelParams {
        &self.reward
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let context = self.current_context();
        let node = context.node(action).ok_or(Error::InvalidAction {
            action,
            nodes: context.len(),
        })?;
        let profile = predict_profile(node, &self.synth, self.noisy, &mut self.noise);
        let reward = compute_reward(&profile, &self.reward)?;
        let outcome = StepOutcome {
            context_id: self.current,
            reward,
            profile,
        };
        self.current = self.slice[self.sampler.random_range(0..self.slice.len())];
        Ok(outcome)
    }
}
