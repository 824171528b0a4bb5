//! Penalty-bonus reward over a [`PerformanceProfile`].

use serde::{Deserialize, Serialize};

use crate::domain::PerformanceProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardModelParams {
    pub base_reward: f64,
    pub api_latency_penalty_per_ms: f64,
    pub pod_latency_penalty_per_s: f64,
    pub cpu_threshold_pct: f64,
    pub cpu_penalty_per_pct: f64,
    pub mem_threshold_pct: f64,
    pub mem_penalty_per_pct: f64,
    pub throughput_baseline_ppm: f64,
    pub throughput_bonus_per_ppm: f64,
    pub failure_penalty_scale: f64,
}

impl Default for RewardModelParams {
    fn default() -> Self {
        Self {
            base_reward: 100.0,
            api_latency_penalty_per_ms: 0.5,
            pod_latency_penalty_per_s: 5.0,
            cpu_threshold_pct: 85.0,
            cpu_penalty_per_pct: 3.0,
            mem_threshold_pct: 80.0,
            mem_penalty_per_pct: 2.0,
            throughput_baseline_ppm: 100.0,
            throughput_bonus_per_ppm: 0.1,
            failure_penalty_scale: 100.0,
        }
    }
}

impl RewardModelParams {
    pub fn validate(&self) -> Result<()> {
        let coefficients = [
            ("base_reward", self.base_reward),
            ("api_latency_penalty_per_ms", self.api_latency_penalty_per_ms),
            ("pod_latency_penalty_per_s", self.pod_latency_penalty_per_s),
            ("cpu_penalty_per_pct", self.cpu_penalty_per_pct),
            ("mem_penalty_per_pct", self.mem_penalty_per_pct),
            ("throughput_bonus_per_ppm", self.throughput_bonus_per_ppm),
            ("failure_penalty_scale", self.failure_penalty_scale),
        ];
        for (name, v) in coefficients {
            if !v.is_finite() {
                return Err(Error::Config(format!("reward.{name} must be finite")));
            }
            if name != "base_reward" && v < 0.0 {
                return Err(Error::Config(format!("reward.{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("cpu_threshold_pct", self.cpu_threshold_pct),
            ("mem_threshold_pct", self.mem_threshold_pct),
        ] {
            if !(v > 0.0 && v < 100.0) {
                return Err(Error::Config(format!("reward.{name} must lie in (0, 100), got {v}")));
            }
        }
        if !(self.throughput_baseline_ppm.is_finite() && self.throughput_baseline_ppm >= 0.0) {
            return Err(Error::Config("reward.throughput_baseline_ppm must be >= 0".into()));
        }
        Ok(())
    }
}

/// Scalar reward for one placement. The result is not clamped: a saturated,
/// failing host scores far below zero.
pub fn compute_reward(profile: &PerformanceProfile, params: &RewardModelParams) -> Result<f64> {
    for (name, v) in profile.fields() {
        if !v.is_finite() {
            return Err(Error::InvalidProfile(format!("{name} is not finite ({v})")));
        }
    }
    let p = params;
    let latency_penalty = p.api_latency_penalty_per_ms * profile.api_latency_ms
        + p.pod_latency_penalty_per_s * profile.pod_latency_s;
    let cpu_penalty = p.cpu_penalty_per_pct * (profile.cpu_util_pct - p.cpu_threshold_pct).max(0.0);
    let mem_penalty = p.mem_penalty_per_pct * (profile.mem_util_pct - p.mem_threshold_pct).max(0.0);
    let bonus = p.throughput_bonus_per_ppm
        * (profile.pod_throughput_ppm - p.throughput_baseline_ppm).max(0.0);
    let failure = p.failure_penalty_scale * (1.0 - profile.success_rate);

    Ok(p.base_reward - latency_penalty - cpu_penalty - mem_penalty + bonus - failure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(api: f64, cpu: f64, mem: f64, tput: f64, tau: f64, rho: f64) -> PerformanceProfile {
        PerformanceProfile {
            api_latency_ms: api,
            cpu_util_pct: cpu,
            mem_util_pct: mem,
            pod_throughput_ppm: tput,
            pod_latency_s: tau,
            success_rate: rho,
        }
    }

    fn reward(p: PerformanceProfile) -> f64 {
        compute_reward(&p, &RewardModelParams::default()).unwrap()
    }

    #[test]
    fn healthy_host() {
        // 100 - 20*0.5 - 2*5 + 50*0.1
        assert!((reward(profile(20.0, 50.0, 50.0, 150.0, 2.0, 1.0)) - 85.0).abs() < 1e-12);
    }

    #[test]
    fn everything_at_threshold() {
        assert_eq!(reward(profile(0.0, 0.0, 0.0, 100.0, 0.0, 1.0)), 100.0);
    }

    #[test]
    fn saturated_and_failing_host() {
        // 100 - 5*3 - 5*2 - 50
        assert!((reward(profile(0.0, 90.0, 85.0, 50.0, 0.0, 0.5)) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn total_failure_costs_full_scale() {
        let ok = reward(profile(10.0, 40.0, 40.0, 200.0, 1.0, 1.0));
        let failed = reward(profile(10.0, 40.0, 40.0, 200.0, 1.0, 0.0));
        assert!((ok - failed - 100.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let p = profile(f64::NAN, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            compute_reward(&p, &RewardModelParams::default()),
            Err(Error::InvalidProfile(_))
        ));
    }

    #[test]
    fn default_params_validate() {
        assert!(RewardModelParams::default().validate().is_ok());
        let bad = RewardModelParams {
            cpu_threshold_pct: 100.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
