//! Dense feed-forward networks with ReLU hidden layers, reverse-mode
//! gradients, Adam, and an experience replay buffer.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One affine layer. Weights are stored input-major: `weights[i * outputs + o]`.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (i, &x) in input.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (o, w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Parameter-shaped buffer used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|v| v.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|g| g.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|&g| g == 0.0)
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect()
    }
}

/// Layer inputs recorded during a forward pass; the last entry is the output.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// He-initialized network: weights ~ N(0, 2/fan_in), zero biases.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for layer in &mut net.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {layer_sizes:?}")));
        }
        Ok(Self {
            layers: layer_sizes
                .windows(2)
                .map(|w| Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: vec![0.0; w[0] * w[1]],
                    biases: vec![0.0; w[1]],
                })
                .collect(),
        })
    }

    /// Builds a network from input-major weights (`weights[l][i * out + o]`) and biases.
    pub fn from_parts(layer_sizes: &[usize], weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        if weights.len() != net.layers.len() || biases.len() != net.layers.len() {
            return Err(Error::DimensionMismatch("parameter arrays do not match layer count".into()));
        }
        for ((layer, w), b) in net.layers.iter_mut().zip(weights).zip(biases) {
            if w.len() != layer.weights.len() || b.len() != layer.biases.len() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {}x{} got {} weights and {} biases",
                    layer.inputs,
                    layer.outputs,
                    w.len(),
                    b.len()
                )));
            }
            if w.iter().chain(&b).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
            layer.weights = w;
            layer.biases = b;
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut it = params.iter();
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn copy_from(&mut self, other: &Mlp) {
        self.layers.clone_from(&other.layers);
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::DimensionMismatch(format!(
                "input of length {} for a network expecting {}",
                input.len(),
                self.input_size()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.values.pop().expect("output present"))
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<Activations> {
        self.check_input(input)?;
        let mut acts = Activations::default();
        self.forward_into(input, &mut acts);
        Ok(acts)
    }

    /// Forward pass reusing the buffers in `acts`; the input is not validated.
    pub fn forward_into(&self, input: &[f64], acts: &mut Activations) {
        let n = self.layers.len();
        acts.values.resize_with(n + 1, Vec::new);
        acts.values[0].clear();
        acts.values[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.values.split_at_mut(l + 1);
            let out = &mut rest[0];
            layer.forward(&done[l], out);
            if l + 1 < n {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }

    /// Gradients of `<output_gradient, f(input)>` with respect to every parameter.
    pub fn backward(&self, acts: &Activations, output_gradient: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradients(acts, output_gradient, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's gradients into `grads`.
    pub fn accumulate_gradients(&self, acts: &Activations, output_gradient: &[f64], grads: &mut Gradients) -> Result<()> {
        if output_gradient.len() != self.output_size() || acts.values.len() != self.layers.len() + 1 {
            return Err(Error::DimensionMismatch("output gradient does not match the network".into()));
        }
        let mut delta = output_gradient.to_vec();
        let mut next_delta = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts.values[l];
            let (gw, gb) = (&mut grads.weights[l], &mut grads.biases[l]);
            for (b, d) in gb.iter_mut().zip(&delta) {
                *b += d;
            }
            for (i, &x) in input.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                for (g, d) in row.iter_mut().zip(&delta) {
                    *g += x * d;
                }
            }
            if l == 0 {
                break;
            }
            next_delta.clear();
            next_delta.extend(input.iter().enumerate().map(|(i, &x)| {
                // ReLU: the layer input is the previous activation, positive iff active.
                if x > 0.0 {
                    let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    row.iter().zip(&delta).map(|(w, d)| w * d).sum()
                } else {
                    0.0
                }
            }));
            std::mem::swap(&mut delta, &mut next_delta);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_sizes: self.layer_sizes(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        Self::from_parts(&ckpt.layer_sizes, ckpt.weights, ckpt.biases)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Serialized network: layer sizes, then per-layer weights as `inputs x
/// outputs` row-major arrays and bias vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    /// One bias-corrected Adam update of `net` along `-grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != net.layers.len()
            || grads.weights.iter().zip(&net.layers).any(|(g, l)| g.len() != l.weights.len())
        {
            return Err(Error::DimensionMismatch("gradients do not match the network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let step_size = self.lr / c1;
        let c2_sqrt = c2.sqrt();
        let eps = self.epsilon;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let params = [(&mut layer.weights, 0), (&mut layer.biases, 1)];
            for (p, kind) in params {
                let (g, m, v) = if kind == 0 {
                    (&grads.weights[l], &mut self.first.weights[l], &mut self.second.weights[l])
                } else {
                    (&grads.biases[l], &mut self.first.biases[l], &mut self.second.biases[l])
                };
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step_size * *m / (v.sqrt() / c2_sqrt + eps);
                }
            }
        }
        Ok(())
    }
}

/// Huber loss with threshold `delta`.
pub fn huber(error: f64, delta: f64) -> f64 {
    if error.abs() <= delta {
        0.5 * error * error
    } else {
        delta * (error.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(error: f64, delta: f64) -> f64 {
    error.clamp(-delta, delta)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Contents from oldest to newest.
    pub fn contents(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform sample of `batch` distinct stored transitions.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(batch, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch > self.items.len() {
            return Err(Error::Underfull {
                have: self.items.len(),
                need: batch,
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }
}
