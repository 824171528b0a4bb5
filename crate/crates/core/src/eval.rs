//! Applies a trained policy and the baselines to an inventory and compares
//! the choices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::{
    baseline_high_res, baseline_low_latency, baseline_random, Agent, PlacementDecision, Strategy,
};
use crate::domain::ClusterContext;
use crate::error::Result;
use crate::reward::{compute_reward, RewardModelParams};
use crate::synth::{expected_profile, SynthModelParams};

pub const REPORT_VERSION: &str = "nlcps-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Agreement {
    Match,
    Mismatch,
    NotSpecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub decision: PlacementDecision,
    /// Noiseless synthetic reward of the chosen node.
    pub synthetic_reward: f64,
    pub expected_node: Option<String>,
    pub agreement: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: String,
    pub profile: String,
    pub node_count: usize,
    /// One entry per strategy, in [`Strategy::ALL`] order.
    pub outcomes: Vec<StrategyOutcome>,
    pub notes: Vec<String>,
}

impl EvaluationReport {
    pub fn outcome(&self, strategy: Strategy) -> Option<&StrategyOutcome> {
        self.outcomes.iter().find(|o| o.decision.strategy == strategy)
    }

    pub fn all_expectations_met(&self) -> bool {
        self.outcomes
            .iter()
            .all(|o| o.agreement != Agreement::Mismatch)
    }
}

/// Pure-exploitation NL-CPS choice. A single-node inventory has nothing to
/// compare, so that node is returned with a note.
pub fn nlcps_decision(agent: &Agent, context: &ClusterContext) -> Result<(PlacementDecision, Option<String>)> {
    if context.len() == 1 {
        let decision = PlacementDecision {
            strategy: Strategy::NlCps,
            chosen_index: 0,
            chosen_node_id: context.node_ids()[0].clone(),
            all_scores: Vec::new(),
        };
        let note = format!(
            "inventory has a single node ({}); no alternatives exist",
            context.node_ids()[0]
        );
        return Ok((decision, Some(note)));
    }
    Ok((agent.recommend(context)?, None))
}

/// Noiseless synthetic reward of placing the control plane on `index`.
pub fn synthetic_reward(
    context: &ClusterContext,
    index: usize,
    synth: &SynthModelParams,
    reward: &RewardModelParams,
) -> Result<f64> {
    compute_reward(&expected_profile(&context.nodes()[index], synth), reward)
}

pub fn evaluate_profile(
    agent: &Agent,
    profile_name: &str,
    context: &ClusterContext,
    expectations: &BTreeMap<Strategy, String>,
    synth: &SynthModelParams,
    reward: &RewardModelParams,
    random_seed: u64,
) -> Result<EvaluationReport> {
    let mut notes = Vec::new();
    let (nlcps, note) = nlcps_decision(agent, context)?;
    notes.extend(note);
    let decisions = [
        nlcps,
        baseline_high_res(context),
        baseline_low_latency(context),
        baseline_random(context, random_seed),
    ];

    let mut outcomes = Vec::with_capacity(decisions.len());
    for decision in decisions {
        let expected_node = expectations.get(&decision.strategy).cloned();
        if let Some(id) = &expected_node {
            if context.index_of(id).is_none() {
                notes.push(format!(
                    "expected {} node {id:?} is not in the inventory",
                    decision.strategy
                ));
            }
        }
        let agreement = match &expected_node {
            None => Agreement::NotSpecified,
            Some(id) if *id == decision.chosen_node_id => Agreement::Match,
            Some(_) => Agreement::Mismatch,
        };
        outcomes.push(StrategyOutcome {
            synthetic_reward: synthetic_reward(context, decision.chosen_index, synth, reward)?,
            decision,
            expected_node,
            agreement,
        });
    }
    Ok(EvaluationReport {
        format_version: REPORT_VERSION.to_string(),
        profile: profile_name.to_string(),
        node_count: context.len(),
        outcomes,
        notes,
    })
}

/// Fixed-width comparison table.
pub fn render_table(report: &EvaluationReport, context: &ClusterContext) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "profile: {} ({} nodes)", report.profile, report.node_count);
    let _ = writeln!(
        out,
        "{:<12} {:<8} {:<12} {:>4} {:>6} {:>9} {:>10} {:<9} agreement",
        "strategy", "node", "region", "cpu", "mem_gb", "lat_ms", "reward", "expected"
    );
    for o in &report.outcomes {
        let i = o.decision.chosen_index;
        let n = &context.nodes()[i];
        let region = context.regions().get(i).map(String::as_str).unwrap_or("-");
        let agreement = match o.agreement {
            Agreement::Match => "match",
            Agreement::Mismatch => "MISMATCH",
            Agreement::NotSpecified => "-",
        };
        let _ = writeln!(
            out,
            "{:<12} {:<8} {:<12} {:>4} {:>6} {:>9.1} {:>10.2} {:<9} {}",
            o.decision.strategy.name(),
            o.decision.chosen_node_id,
            region,
            n.cpu_cores,
            n.memory_gb,
            n.avg_latency_ms,
            o.synthetic_reward,
            o.expected_node.as_deref().unwrap_or("-"),
            agreement
        );
    }
    for note in &report.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}
