//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use nlcps_core::nn::NetworkWeights;
use nlcps_core::PerformanceProfile;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../profiles")
        .join(name)
}

/// The default reward written out term by term with literal constants, kept
/// independent of the library's parameter plumbing.
pub fn reference_reward(p: &PerformanceProfile) -> f64 {
    let mut r = 100.0;
    r -= 0.5 * p.api_latency_ms;
    r -= 5.0 * p.pod_latency_s;
    if p.cpu_util_pct > 85.0 {
        r -= 3.0 * (p.cpu_util_pct - 85.0);
    }
    if p.mem_util_pct > 80.0 {
        r -= 2.0 * (p.mem_util_pct - 80.0);
    }
    if p.pod_throughput_ppm > 100.0 {
        r += 0.1 * (p.pod_throughput_ppm - 100.0);
    }
    r -= 100.0 * (1.0 - p.success_rate);
    r
}

/// A profile drawn across and beyond the thresholds; one draw in eight lands
/// exactly on a threshold to exercise the boundaries.
pub fn random_profile(rng: &mut ChaCha8Rng) -> PerformanceProfile {
    let mut p = PerformanceProfile {
        api_latency_ms: rng.random_range(0.0..400.0),
        cpu_util_pct: rng.random_range(0.0..=100.0),
        mem_util_pct: rng.random_range(0.0..=100.0),
        pod_throughput_ppm: rng.random_range(0.0..1500.0),
        pod_latency_s: rng.random_range(0.0..80.0),
        success_rate: rng.random_range(0.0..=1.0),
    };
    if rng.random_ratio(1, 8) {
        match rng.random_range(0..4) {
            0 => p.cpu_util_pct = 85.0,
            1 => p.mem_util_pct = 80.0,
            2 => p.pod_throughput_ppm = 100.0,
            _ => p.success_rate = 0.0,
        }
    }
    p
}

pub fn squared_loss(net: &NetworkWeights, x: &[f64], target: f64) -> f64 {
    let d = net.forward(x).unwrap() - target;
    d * d
}

fn relu_pattern(net: &NetworkWeights, x: &[f64]) -> Vec<bool> {
    net.hidden_activations(x)
        .unwrap()
        .into_iter()
        .flatten()
        .map(|a| a > 0.0)
        .collect()
}

pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because the perturbation crossed a ReLU kink.
    pub skipped: usize,
}

/// Compares the analytic gradient with central differences of step `h` on
/// the given parameter indices.
///
/// The relative error is `|a - n| / max(|a|, |n|, floor)`. The floor keeps
/// gradients that are zero up to rounding from dividing by nothing.
pub fn grad_check(
    net: &NetworkWeights,
    x: &[f64],
    target: f64,
    params: &[usize],
    h: f64,
    floor: f64,
) -> GradCheck {
    let (grad, _) = net.gradient(x, target).unwrap();
    let base = relu_pattern(net, x);
    let mut probe = net.clone();
    let mut out = GradCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for &k in params {
        let theta = net.param(k);
        probe.set_param(k, theta + h);
        let plus_pattern = relu_pattern(&probe, x);
        let plus = squared_loss(&probe, x, target);
        probe.set_param(k, theta - h);
        let minus_pattern = relu_pattern(&probe, x);
        let minus = squared_loss(&probe, x, target);
        probe.set_param(k, theta);
        if plus_pattern != base || minus_pattern != base {
            out.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grad.param(k);
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        out.max_relative_error = out.max_relative_error.max((analytic - numeric).abs() / denom);
        out.checked += 1;
    }
    out
}

/// Randomizes biases so that not every unit starts on the same side of its
/// kink as in a fresh He initialization.
pub fn jitter_biases(net: &mut NetworkWeights, rng: &mut ChaCha8Rng) {
    for layer in net.layers_mut() {
        for b in &mut layer.bias {
            *b = rng.random_range(-0.5..0.5);
        }
    }
}
