//! NL-CPS: a neural contextual bandit that chooses which node of a
//! heterogeneous, multi-region cluster should host the Kubernetes control
//! plane.
//!
//! Each candidate node is described by `(cpu cores, memory GB, mean peer
//! latency ms)`. A small MLP predicts the reward of placing the control plane
//! on a node from its min-max normalized features; an upper-confidence bonus
//! `alpha / sqrt(k + 1)` drives exploration during training. Training runs
//! against a calibrated synthetic performance model.

pub mod agent;
pub mod domain;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod reward;
pub mod rng;
pub mod synth;
pub mod training;

pub use agent::{Agent, AgentConfig, CounterStrategy, PlacementDecision, SelectionCounter, Strategy, UcbScore};
pub use domain::{ClusterContext, NodeFeatures, NormalizedFeatures, PerformanceProfile};
pub use error::{Error, Result};
pub use eval::{EvaluationReport, evaluate_profile};
pub use io::{ExperimentConfig, Inventory};
pub use nn::{AdamState, NetworkWeights};
pub use reward::{compute_reward, RewardModelParams};
pub use synth::{generate_dataset, oracle_best, predict_profile, SynthModelParams, SyntheticDataset};
pub use training::{train, TrainingConfig, TrainingTrace};
