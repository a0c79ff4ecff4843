//! Small dense-network engine: batched forward pass, exact backpropagation,
//! Adam, and the actor/critic topologies used by the agent.
//!
//! Inputs are batches laid out as `batch × width` matrices. Each layer stores
//! its weight as `out × in`, so a layer computes `Z = X Wᵀ + b`, `A = act(Z)`.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input width {got} does not match layer width {expected}")]
    Width { expected: usize, got: usize },
    #[error("layer widths do not chain: layer {layer} expects {expected} inputs, previous emits {got}")]
    Chain { layer: usize, expected: usize, got: usize },
    #[error("layer widths must be positive")]
    EmptyLayer,
    #[error("network needs at least one layer")]
    NoLayers,
    #[error("forward cache does not belong to these parameters")]
    StaleCache,
    #[error("parameter shapes differ")]
    ShapeMismatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out × in`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_width: self.weight.ncols(),
            out_width: self.weight.nrows(),
            activation: self.activation,
        }
    }
}

/// Weights and biases of a feed-forward network.
///
/// `version` increases on every in-place update so forward caches taken
/// before an update cannot be used for backpropagation after it.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub layers: Vec<Dense<T>>,
    pub version: u64,
}

/// Per-layer gradients, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// Activations recorded by [`MlpParams::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Array2<T>>,
    pre_activations: Vec<Array2<T>>,
    version: u64,
}

impl<T: Scalar> MlpParams<T> {
    /// Builds a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self, NeuralError> {
        let specs: Vec<LayerSpec> = layers.iter().map(Dense::spec).collect();
        check_chain(&specs)?;
        for l in &layers {
            if l.bias.len() != l.weight.nrows() {
                return Err(NeuralError::ShapeMismatch);
            }
        }
        Ok(Self { layers, version: 0 })
    }

    /// Uniform fan-in initialization, `U(-1/√in, 1/√in)`, with the final layer
    /// drawn from `U(-final_range, final_range)`.
    pub fn init<R: Rng + ?Sized>(specs: &[LayerSpec], final_range: f64, rng: &mut R) -> Result<Self, NeuralError> {
        check_chain(specs)?;
        let last = specs.len() - 1;
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let bound = if i == last {
                    final_range
                } else {
                    1.0 / (spec.in_width as f64).sqrt()
                };
                let mut draw = || T::of(rng.random_range(-bound..=bound));
                let weight = Array2::from_shape_simple_fn((spec.out_width, spec.in_width), &mut draw);
                let bias = Array1::from_shape_simple_fn(spec.out_width, &mut draw);
                Dense {
                    weight,
                    bias,
                    activation: spec.activation,
                }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.specs() == other.specs()
    }

    /// Batched forward pass. Returns the output batch and the cache needed by
    /// [`MlpParams::backward`].
    pub fn forward(&self, input: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>), NeuralError> {
        if input.ncols() != self.in_width() {
            return Err(NeuralError::Width {
                expected: self.in_width(),
                got: input.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            inputs.push(x);
            pre_activations.push(z);
            x = a;
        }
        Ok((
            x,
            ForwardCache {
                inputs,
                pre_activations,
                version: self.version,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: ArrayView2<T>) -> Result<Array2<T>, NeuralError> {
        if input.ncols() != self.in_width() {
            return Err(NeuralError::Width {
                expected: self.in_width(),
                got: input.ncols(),
            });
        }
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[T]) -> Result<Vec<T>, NeuralError> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row vector shape");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Backpropagates `output_grad` (`∂L/∂output`, batch × out) through the
    /// cached forward pass. Parameter gradients are summed over the batch.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: ArrayView2<T>) -> Result<(Gradients<T>, Array2<T>), NeuralError> {
        let stale = cache.version != self.version
            || cache.inputs.len() != self.layers.len()
            || self
                .layers
                .iter()
                .zip(&cache.pre_activations)
                .any(|(l, z)| z.ncols() != l.weight.nrows())
            || output_grad.dim() != cache.pre_activations[self.layers.len() - 1].dim();
        if stale {
            return Err(NeuralError::StaleCache);
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            Zip::from(&mut delta)
                .and(&cache.pre_activations[i])
                .for_each(|d, &z| *d *= layer.activation.derivative(z));
            let dw = delta.t().dot(&cache.inputs[i]);
            let db = delta.sum_axis(Axis(0));
            let dx = delta.dot(&layer.weight);
            grads.push((dw, db));
            delta = dx;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Elementwise `self ← f(self, other)` over all parameters.
    pub fn zip_apply(&mut self, other: &Self, f: impl Fn(T, T) -> T) -> Result<(), NeuralError> {
        if !self.same_shape(other) {
            return Err(NeuralError::ShapeMismatch);
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            Zip::from(&mut a.weight).and(&b.weight).for_each(|x, &y| *x = f(*x, y));
            Zip::from(&mut a.bias).and(&b.bias).for_each(|x, &y| *x = f(*x, y));
        }
        self.version += 1;
        Ok(())
    }

    /// Serializes into the checkpoint layout (see [`MlpParams::from_bytes`]).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.n_params() * T::BYTES);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT.to_le_bytes());
        out.push(b'L');
        out.push(T::BYTES as u8);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.weight.ncols() as u32).to_le_bytes());
            out.extend_from_slice(&(l.weight.nrows() as u32).to_le_bytes());
            out.push(l.activation.tag());
        }
        for l in &self.layers {
            // row-major: one row per output unit
            for &x in l.weight.iter() {
                x.write_le(&mut out);
            }
            for &x in l.bias.iter() {
                x.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint.
    ///
    /// Layout, all integers little-endian:
    ///
    /// ```text
    /// magic      8 bytes  "NOMAMLP\0"
    /// format     u32      currently 1
    /// endianness u8       b'L'
    /// scalar     u8       bytes per value (4 = f32, 8 = f64)
    /// version    u64      parameter update counter
    /// layers     u32      count, then per layer: in u32, out u32, activation u8
    /// payload    per layer: weight (out × in, row-major), then bias
    /// ```
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |msg: &str| NeuralError::Checkpoint(msg.to_string());
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated header"))? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let format = r.u32().ok_or_else(|| bad("truncated header"))?;
        if format != CHECKPOINT_FORMAT {
            return Err(NeuralError::Checkpoint(format!("unsupported format {format}")));
        }
        let endian = r.take(1).ok_or_else(|| bad("truncated header"))?[0];
        if endian != b'L' {
            return Err(bad("unsupported endianness"));
        }
        let width = r.take(1).ok_or_else(|| bad("truncated header"))?[0] as usize;
        if width != T::BYTES {
            return Err(NeuralError::Checkpoint(format!(
                "scalar width {width} does not match requested {}",
                T::BYTES
            )));
        }
        let version = r.u64().ok_or_else(|| bad("truncated header"))?;
        let n_layers = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let mut specs = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let in_width = r.u32().ok_or_else(|| bad("truncated layer table"))? as usize;
            let out_width = r.u32().ok_or_else(|| bad("truncated layer table"))? as usize;
            let tag = r.take(1).ok_or_else(|| bad("truncated layer table"))?[0];
            let activation = Activation::from_tag(tag).ok_or_else(|| bad("unknown activation tag"))?;
            specs.push(LayerSpec {
                in_width,
                out_width,
                activation,
            });
        }
        check_chain(&specs)?;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in &specs {
            let mut read = |count: usize| -> Result<Vec<T>, NeuralError> {
                let raw = r.take(count * T::BYTES).ok_or_else(|| bad("truncated payload"))?;
                Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
            };
            let w = read(spec.in_width * spec.out_width)?;
            let b = read(spec.out_width)?;
            layers.push(Dense {
                weight: Array2::from_shape_vec((spec.out_width, spec.in_width), w).expect("sized above"),
                bias: Array1::from(b),
                activation: spec.activation,
            });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let params = Self { layers, version };
        if !params.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"NOMAMLP\0";
const CHECKPOINT_FORMAT: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

fn check_chain(specs: &[LayerSpec]) -> Result<(), NeuralError> {
    if specs.is_empty() {
        return Err(NeuralError::NoLayers);
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_width == 0 || s.out_width == 0 {
            return Err(NeuralError::EmptyLayer);
        }
        if i > 0 && specs[i - 1].out_width != s.in_width {
            return Err(NeuralError::Chain {
                layer: i,
                expected: s.in_width,
                got: specs[i - 1].out_width,
            });
        }
    }
    Ok(())
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Gradients<T>,
    pub second_moment: Gradients<T>,
    pub step: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn new(params: &MlpParams<T>, learning_rate: T) -> Self {
        Self {
            first_moment: Gradients::zeros_like(params),
            second_moment: Gradients::zeros_like(params),
            step: 0,
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

fn shapes_agree<T: Scalar>(params: &MlpParams<T>, g: &Gradients<T>) -> bool {
    params.layers.len() == g.layers.len()
        && params
            .layers
            .iter()
            .zip(&g.layers)
            .all(|(l, (w, b))| l.weight.dim() == w.dim() && l.bias.dim() == b.dim())
}

/// One bias-corrected Adam descent step on `params`.
pub fn adam_step<T: Scalar>(params: &mut MlpParams<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<(), NeuralError> {
    if !shapes_agree(params, grads) || !shapes_agree(params, &state.first_moment) || !shapes_agree(params, &state.second_moment) {
        return Err(NeuralError::ShapeMismatch);
    }
    state.step += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    let t = state.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[i];
        let (mw, mb) = &mut state.first_moment.layers[i];
        let (vw, vb) = &mut state.second_moment.layers[i];
        let update = |p: &mut T, m: &mut T, v: &mut T, g: &T| {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        Zip::from(&mut layer.weight).and(mw).and(vw).and(gw).for_each(update);
        Zip::from(&mut layer.bias).and(mb).and(vb).and(gb).for_each(update);
    }
    params.version += 1;
    Ok(())
}

/// Hidden-layer configuration for the actor and critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkShape {
    pub hidden_width: usize,
    pub actor_hidden_layers: usize,
    pub critic_hidden_layers: usize,
    /// Output activation of the actor; identity leaves feasibility to the
    /// environment's projection.
    pub actor_output: Activation,
    pub final_init_range: f64,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            hidden_width: 128,
            actor_hidden_layers: 4,
            critic_hidden_layers: 3,
            actor_output: Activation::Identity,
            final_init_range: 3e-3,
        }
    }
}

fn mlp_specs(input: usize, hidden: usize, depth: usize, output: usize, out_act: Activation) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(depth + 1);
    let mut width = input;
    for _ in 0..depth {
        specs.push(LayerSpec {
            in_width: width,
            out_width: hidden,
            activation: Activation::Relu,
        });
        width = hidden;
    }
    specs.push(LayerSpec {
        in_width: width,
        out_width: output,
        activation: out_act,
    });
    specs
}

/// Actor `π(s)`: state (`4N + 1`) → ReLU hidden layers → raw action (`4N + 2`).
pub fn build_actor<T: Scalar, R: Rng + ?Sized>(n_antennas: usize, shape: &NetworkShape, rng: &mut R) -> Result<MlpParams<T>, NeuralError> {
    let specs = mlp_specs(
        crate::env::state_width(n_antennas),
        shape.hidden_width,
        shape.actor_hidden_layers,
        crate::env::action_width(n_antennas),
        shape.actor_output,
    );
    MlpParams::init(&specs, shape.final_init_range, rng)
}

/// Critic `Q(s, a)`: concatenated state and action → ReLU hidden layers → scalar.
pub fn build_critic<T: Scalar, R: Rng + ?Sized>(n_antennas: usize, shape: &NetworkShape, rng: &mut R) -> Result<MlpParams<T>, NeuralError> {
    let specs = mlp_specs(
        crate::env::state_width(n_antennas) + crate::env::action_width(n_antennas),
        shape.hidden_width,
        shape.critic_hidden_layers,
        1,
        Activation::Identity,
    );
    MlpParams::init(&specs, shape.final_init_range, rng)
}

/// Row-wise `[left | right]`.
pub fn concat_columns<T: Scalar>(left: ArrayView2<T>, right: ArrayView2<T>) -> Array2<T> {
    let mut out = Array2::zeros((left.nrows(), left.ncols() + right.ncols()));
    out.slice_mut(s![.., ..left.ncols()]).assign(&left);
    out.slice_mut(s![.., left.ncols()..]).assign(&right);
    out
}
