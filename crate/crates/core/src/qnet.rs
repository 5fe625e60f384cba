//! Small dense Q-network with hand-written backpropagation and Adam.
//!
//! The trunk is a stack of rectified dense layers over the feature proxies.
//! The decision-history vector bypasses the trunk and is concatenated with
//! the trunk output right before the final linear layer, which emits one
//! Q-value per action.
//!
//! All parameters live in one flat `Vec<f64>`; layers are views at fixed
//! offsets. Layout per layer is the row-major weight matrix (`out x in`)
//! followed by the bias vector.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::env::HISTORY_DIM;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub trunk_dims: Vec<usize>,
    pub history_dim: usize,
    pub outputs: usize,
}

impl NetSpec {
    /// Policy network for the video environment: two `feature_dim` proxies in,
    /// the 21-wide history fused late, four Q-values out.
    pub fn policy(feature_dim: usize, trunk_dims: Vec<usize>) -> Self {
        Self {
            input_dim: 2 * feature_dim,
            trunk_dims,
            history_dim: HISTORY_DIM,
            outputs: Action::COUNT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.outputs == 0 || self.trunk_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("degenerate network shape {self:?}")));
        }
        Ok(())
    }

    fn trunk_out(&self) -> usize {
        self.trunk_dims.last().copied().unwrap_or(self.input_dim)
    }

    /// `(inputs, outputs)` of every layer, trunk first, head last.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.trunk_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &d in &self.trunk_dims {
            shapes.push((fan_in, d));
            fan_in = d;
        }
        shapes.push((self.trunk_out() + self.history_dim, self.outputs));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Layer {
    fn weights<'a>(&self, data: &'a [f64]) -> &'a [f64] {
        &data[self.offset..self.offset + self.inputs * self.outputs]
    }

    fn bias<'a>(&self, data: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.inputs * self.outputs;
        &data[start..start + self.outputs]
    }

    fn apply(&self, data: &[f64], x: &[f64], out: &mut Vec<f64>) {
        let w = self.weights(data);
        out.clear();
        out.extend_from_slice(self.bias(data));
        for (o, row) in out.iter_mut().zip(w.chunks_exact(self.inputs)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

fn layout(spec: &NetSpec) -> Vec<Layer> {
    let mut offset = 0;
    spec.layer_shapes()
        .into_iter()
        .map(|(inputs, outputs)| {
            let l = Layer {
                inputs,
                outputs,
                offset,
            };
            offset += inputs * outputs + outputs;
            l
        })
        .collect()
}

/// Network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    spec: NetSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, needed by [`QNetwork::backward`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardCache {
    /// Layer inputs: the trunk input, every rectified trunk activation, and the
    /// head input (last trunk activation concatenated with history).
    pub inputs: Vec<Vec<f64>>,
    pub q_values: Vec<f64>,
}

impl ForwardCache {
    /// Trunk activations only, excluding the head input.
    pub fn trunk_activations(&self) -> &[Vec<f64>] {
        &self.inputs[..self.inputs.len() - 1]
    }
}

impl QNetwork {
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = layout(&spec);
        let params = vec![0.0; spec.param_count()];
        Ok(Self { spec, layers, params })
    }

    /// Uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(spec: NetSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in net.layers.clone() {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            let w = &mut net.params[layer.offset..layer.offset + layer.inputs * layer.outputs];
            for v in w {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn from_params(spec: NetSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("network parameters must be finite".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight `(row, col)` and bias `row` of layer `layer` (head is the last layer).
    pub fn weight_index(&self, layer: usize, row: usize, col: usize) -> usize {
        let l = self.layers[layer];
        assert!(row < l.outputs && col < l.inputs);
        l.offset + row * l.inputs + col
    }

    pub fn bias_index(&self, layer: usize, row: usize) -> usize {
        let l = self.layers[layer];
        assert!(row < l.outputs);
        l.offset + l.inputs * l.outputs + row
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn check_dims(&self, trunk_in: &[f64], history: &[f64]) -> Result<()> {
        if trunk_in.len() != self.spec.input_dim || history.len() != self.spec.history_dim {
            return Err(Error::Domain(format!(
                "network expects {}+{} inputs, got {}+{}",
                self.spec.input_dim,
                self.spec.history_dim,
                trunk_in.len(),
                history.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, trunk_in: &[f64], history: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(trunk_in, history)?.q_values)
    }

    pub fn forward_cached(&self, trunk_in: &[f64], history: &[f64]) -> Result<ForwardCache> {
        self.check_dims(trunk_in, history)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len() + 1),
            q_values: Vec::new(),
        };
        cache.inputs.push(trunk_in.to_vec());
        let (head, trunk) = self.layers.split_last().expect("head layer");
        for layer in trunk {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(&self.params, cache.inputs.last().expect("input"), &mut out);
            for v in &mut out {
                *v = v.max(0.0);
            }
            cache.inputs.push(out);
        }
        let mut head_in = cache.inputs.last().expect("input").clone();
        head_in.extend_from_slice(history);
        let mut q = Vec::with_capacity(head.outputs);
        head.apply(&self.params, &head_in, &mut q);
        cache.inputs.push(head_in);
        cache.q_values = q;
        Ok(cache)
    }

    /// Accumulates into `grads` the gradient of `0.5 * td_error^2`, where
    /// `td_error = Q(s, action) - target`, scaled by `weight`.
    pub fn backward_into(&self, cache: &ForwardCache, action: usize, td_error: f64, weight: f64, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let n = self.layers.len();
        // dL/d(pre-activation) of the current layer.
        let mut delta = vec![0.0; self.spec.outputs];
        delta[action] = td_error * weight;
        for li in (0..n).rev() {
            let layer = self.layers[li];
            // The head reads the trunk output concatenated with history, stored last.
            let x = if li == n - 1 { &cache.inputs[n] } else { &cache.inputs[li] };
            let w_off = layer.offset;
            let b_off = layer.offset + layer.inputs * layer.outputs;
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads[b_off + o] += d;
                let row = &mut grads[w_off + o * layer.inputs..w_off + (o + 1) * layer.inputs];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            // Gradient w.r.t. this layer's input; for the head only the trunk part flows back.
            let back_width = if li == n - 1 { self.spec.trunk_out() } else { layer.inputs };
            let w = layer.weights(&self.params);
            let mut prev = vec![0.0; back_width];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * layer.inputs..o * layer.inputs + back_width];
                for (p, &wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            // Rectifier derivative of the trunk layer that produced `x`.
            for (p, &xi) in prev.iter_mut().zip(&cache.inputs[li][..back_width]) {
                if xi <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn backward(&self, cache: &ForwardCache, action: usize, td_error: f64) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, action, td_error, 1.0, &mut grads);
        grads
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: serde_json::Value) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut w, meta).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// `QNET` magic, little-endian `u32` header length, JSON header, then
    /// every parameter as a little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W, meta: serde_json::Value) -> Result<()> {
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            param_count: self.params.len(),
            meta,
        };
        let json = serde_json::to_vec(&header)?;
        let io = |e| Error::io("<checkpoint>", e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Self, serde_json::Value)> {
        let io = |e| Error::io("<checkpoint>", e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Config("not a Q-network checkpoint".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(io)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json).map_err(io)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        if header.param_count != header.spec.param_count() {
            return Err(Error::Config("checkpoint header is inconsistent with its shape".into()));
        }
        let mut params = Vec::with_capacity(header.param_count);
        let mut buf = [0u8; 8];
        for _ in 0..header.param_count {
            r.read_exact(&mut buf).map_err(io)?;
            params.push(f64::from_le_bytes(buf));
        }
        Ok((Self::from_params(header.spec, params)?, header.meta))
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"QNET";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    spec: NetSpec,
    param_count: usize,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub const DEFAULT_LEARNING_RATE: f64 = 5e-4;

    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One bias-corrected Adam update of `params` against `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
