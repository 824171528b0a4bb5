//! Fully-connected ReLU network with squared-error loss and Adam.
//!
//! Every hidden layer is followed by a ReLU; the output layer is linear.
//! Weights are stored input-major (`w[i * outputs + o]`) so the forward pass
//! and the weight-gradient outer product both run along contiguous rows.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// `3 -> 256 -> 256 -> 128 -> 1`.
pub const DEFAULT_ARCHITECTURE: [usize; 5] = [3, 256, 256, 128, 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs x outputs`, input-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Network parameters. Also used as the container for gradients and Adam
/// moments, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    layers: Vec<Dense>,
}

pub type Gradient = NetworkWeights;

/// Weight initialization scheme. Biases always start at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// `N(0, 2 / fan_in)`, suited to ReLU layers.
    #[default]
    HeNormal,
    /// `N(0, 2 / (fan_in + fan_out))`.
    XavierNormal,
}

impl NetworkWeights {
    /// All-zero network for the given layer widths (`[inputs, hidden.., 1]`).
    pub fn zeros(architecture: &[usize]) -> Result<Self> {
        validate_architecture(architecture)?;
        Ok(Self {
            layers: architecture
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// He-normal initialization: `w ~ N(0, 2 / fan_in)`, zero biases.
    pub fn he_init(architecture: &[usize], seed: u64) -> Result<Self> {
        Self::init(architecture, WeightInit::HeNormal, seed)
    }

    /// Gaussian weights with the scheme's per-layer scale, zero biases.
    pub fn init(architecture: &[usize], scheme: WeightInit, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(architecture)?;
        let mut rng = rng::derived_rng(seed, rng::stream::AGENT_INIT, 0);
        for layer in &mut net.layers {
            let std = match scheme {
                WeightInit::HeNormal => he_std(layer.inputs),
                WeightInit::XavierNormal => (2.0 / (layer.inputs + layer.outputs) as f64).sqrt(),
            };
            for w in &mut layer.weights {
                let z: f64 = rng.sample(StandardNormal);
                *w = std * z;
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::InvalidArgument(format!("layer {k}: inconsistent shapes")));
            }
            if k > 0 && layers[k - 1].outputs != l.inputs {
                return Err(Error::InvalidArgument(format!(
                    "layer {k}: expects {} inputs but previous layer emits {}",
                    l.inputs,
                    layers[k - 1].outputs
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {k}: non-finite parameter")));
            }
        }
        if layers.last().map(|l| l.outputs) != Some(1) {
            return Err(Error::InvalidArgument("network must emit a single scalar".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn architecture(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    /// Parameter `k` in flat order: layer by layer, weights then biases.
    pub fn param(&self, k: usize) -> f64 {
        let (l, j) = self.locate(k);
        let layer = &self.layers[l];
        if j < layer.weights.len() {
            layer.weights[j]
        } else {
            layer.bias[j - layer.weights.len()]
        }
    }

    pub fn set_param(&mut self, k: usize, value: f64) {
        let (l, j) = self.locate(k);
        let layer = &mut self.layers[l];
        let nw = layer.weights.len();
        if j < nw {
            layer.weights[j] = value;
        } else {
            layer.bias[j - nw] = value;
        }
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if k < layer.len() {
                return (l, k);
            }
            k -= layer.len();
        }
        panic!("parameter index out of range");
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature in {x:?}")));
        }
        Ok(())
    }

    /// Scalar prediction for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if k < last {
                relu(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Predictions for a batch of rows.
    pub fn forward_batch(&self, rows: &[[f64; 3]]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.forward(r)).collect()
    }

    /// Post-ReLU activations of every hidden layer, for inspection.
    pub fn hidden_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let (acts, _) = self.forward_trace(x);
        Ok(acts[1..acts.len() - 1].to_vec())
    }

    /// Returns per-layer activations (`acts[0]` is the input, `acts[L]` the
    /// output) and hidden pre-activations.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&acts[k], &mut z);
            if k < last {
                let mut a = z.clone();
                relu(&mut a);
                pre.push(z);
                acts.push(a);
            } else {
                acts.push(z);
            }
        }
        (acts, pre)
    }

    /// Gradient of `(f(x) - target)^2` with respect to every parameter, and
    /// the prediction `f(x)`.
    pub fn gradient(&self, x: &[f64], target: f64) -> Result<(Gradient, f64)> {
        self.check_input(x)?;
        if !target.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite target {target}")));
        }
        let (acts, pre) = self.forward_trace(x);
        let prediction = acts[self.layers.len()][0];
        let mut grad = Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        };

        let mut delta = vec![2.0 * (prediction - target)];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grad.layers[k];
            let input = &acts[k];
            for (i, &a) in input.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (gw, d) in row.iter_mut().zip(&delta) {
                    *gw = a * d;
                }
            }
            g.bias.copy_from_slice(&delta);
            if k == 0 {
                break;
            }
            let z_prev = &pre[k - 1];
            let mut prev = vec![0.0; layer.inputs];
            for (i, p) in prev.iter_mut().enumerate() {
                if z_prev[i] <= 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                *p = dot(row, &delta);
            }
            delta = prev;
        }
        Ok((grad, prediction))
    }
}

fn validate_architecture(architecture: &[usize]) -> Result<()> {
    if architecture.len() < 2 {
        return Err(Error::InvalidArgument(
            "architecture needs an input and an output width".into(),
        ));
    }
    if architecture.contains(&0) {
        return Err(Error::InvalidArgument("layer widths must be positive".into()));
    }
    if architecture.last() != Some(&1) {
        return Err(Error::InvalidArgument("network must emit a single scalar".into()));
    }
    Ok(())
}

/// He-normal standard deviation for a layer with `fan_in` inputs.
pub fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

/// Default-architecture network with He initialization.
pub fn init_weights(seed: u64) -> NetworkWeights {
    NetworkWeights::he_init(&DEFAULT_ARCHITECTURE, seed).expect("default architecture is valid")
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums let the compiler vectorize the reduction.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * c + j] * b[4 * c + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub timestep: u64,
    pub first_moment: NetworkWeights,
    pub second_moment: NetworkWeights,
}

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

impl AdamState {
    pub fn new(weights: &NetworkWeights, learning_rate: f64) -> Self {
        let zeros = NetworkWeights {
            layers: weights
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        };
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            timestep: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// Applies one Adam update of `weights` along `grad`.
    pub fn apply(&mut self, weights: &mut NetworkWeights, grad: &Gradient) {
        self.timestep += 1;
        let t = self.timestep as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let step = self.learning_rate / bc1;
        let eps = self.epsilon;
        let inv_sqrt_bc2 = 1.0 / bc2.sqrt();

        let layers = weights
            .layers
            .iter_mut()
            .zip(&grad.layers)
            .zip(self.first_moment.layers.iter_mut().zip(self.second_moment.layers.iter_mut()));
        for ((w, g), (m, v)) in layers {
            adam_update(&mut w.weights, &g.weights, &mut m.weights, &mut v.weights, b1, b2, step, inv_sqrt_bc2, eps);
            adam_update(&mut w.bias, &g.bias, &mut m.bias, &mut v.bias, b1, b2, step, inv_sqrt_bc2, eps);
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    b1: f64,
    b2: f64,
    step: f64,
    inv_sqrt_bc2: f64,
    eps: f64,
) {
    let n = params.len();
    let (grad, m, v) = (&grad[..n], &mut m[..n], &mut v[..n]);
    for i in 0..n {
        let g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        params[i] -= step * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
    }
}

/// One Adam step on the squared error of a single example. Returns the loss
/// measured before the update.
pub fn train_step(
    weights: &mut NetworkWeights,
    adam: &mut AdamState,
    x: &[f64],
    target: f64,
) -> Result<f64> {
    let (grad, prediction) = weights.gradient(x, target)?;
    adam.apply(weights, &grad);
    let residual = prediction - target;
    Ok(residual * residual)
}
