//! Small feed-forward network with hand-written reverse-mode gradients and
//! an Adam optimizer. Hidden layers use `tanh`; the output layer is affine.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random;
use crate::real::Real;

pub const FORMAT_VERSION: u32 = 1;

/// Multilayer perceptron with all parameters in one flat vector.
///
/// Layer `l` occupies `out_l * in_l` row-major weights followed by `out_l`
/// biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    params: Vec<T>,
    offsets: Vec<usize>,
}

/// Dot product with four independent accumulators.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (a4.remainder(), b4.remainder());
    for (x, y) in a4.zip(b4) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn layout(layer_sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(layer_sizes.len());
    let mut total = 0;
    for w in layer_sizes.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

impl<T: Real> Mlp<T> {
    /// Network with all parameters zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {layer_sizes:?} need at least input and output, all positive"
            )));
        }
        let (offsets, total) = layout(layer_sizes);
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![T::zero(); total],
            offsets,
        })
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut rng = random::stream(seed, 0x6d6c70);
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.layer_sizes[l], net.layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = T::lit(rng.random_range(-limit..limit));
            }
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                what: "parameters",
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Mutable view of layer `l`'s weights (row-major, `out × in`) and biases.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let off = self.offsets[l];
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace {
            activations: self.layer_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            deltas: self.layer_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut ws = self.workspace();
        self.forward_into(x, &mut ws)?;
        Ok(ws.output().to_vec())
    }

    /// Forward pass recording activations in `ws`; the output is
    /// `ws.output()`.
    pub fn forward_into(&self, x: &[T], ws: &mut Workspace<T>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        ws.activations[0].copy_from_slice(x);
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = self.offsets[l];
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (before, after) = ws.activations.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for (j, o) in out.iter_mut().enumerate() {
                let acc = biases[j] + dot(&weights[j * n_in..(j + 1) * n_in], input);
                *o = if l == last { acc } else { acc.tanh() };
            }
        }
        Ok(())
    }

    /// Reverse pass for the forward pass stored in `ws`.
    ///
    /// Adds `∂L/∂θ` into `grads` (length `num_params`) and returns `∂L/∂x`,
    /// where `output_gradient` is `∂L/∂output`.
    pub fn backward_into(&self, ws: &mut Workspace<T>, output_gradient: &[T], grads: &mut [T]) -> Result<Vec<T>> {
        if output_gradient.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: self.output_dim(),
                got: output_gradient.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient buffer",
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let last = self.num_layers();
        ws.deltas[last].copy_from_slice(output_gradient);
        for l in (0..last).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = self.offsets[l];
            // delta holds ∂L/∂(pre-activation) of layer l+1
            if l + 1 != last {
                for (d, a) in ws.deltas[l + 1].iter_mut().zip(&ws.activations[l + 1]) {
                    *d = *d * (T::one() - *a * *a);
                }
            }
            let weights = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let (lower, upper) = ws.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let input = &ws.activations[l];
            let back = &mut lower[l];
            back.iter_mut().for_each(|b| *b = T::zero());
            for j in 0..n_out {
                let dj = delta[j];
                gb[j] = gb[j] + dj;
                let row = &weights[j * n_in..(j + 1) * n_in];
                let grow = &mut gw[j * n_in..(j + 1) * n_in];
                for (g, &a) in grow.iter_mut().zip(input.iter()) {
                    *g = *g + dj * a;
                }
                for (b, &w) in back.iter_mut().zip(row) {
                    *b = *b + dj * w;
                }
            }
        }
        Ok(ws.deltas[0].clone())
    }

    /// Convenience wrapper: forward then backward for a single input.
    pub fn backward(&self, x: &[T], output_gradient: &[T]) -> Result<Gradients<T>> {
        let mut ws = self.workspace();
        self.forward_into(x, &mut ws)?;
        let mut params = vec![T::zero(); self.params.len()];
        let input = self.backward_into(&mut ws, output_gradient, &mut params)?;
        Ok(Gradients { params, input })
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn to_document(&self) -> MlpDocument {
        let layers = (0..self.num_layers())
            .map(|l| {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let off = self.offsets[l];
                LayerDocument {
                    weights: self.params[off..off + n_in * n_out]
                        .iter()
                        .map(|v| v.as_f64())
                        .collect(),
                    biases: self.params[off + n_in * n_out..off + n_in * n_out + n_out]
                        .iter()
                        .map(|v| v.as_f64())
                        .collect(),
                }
            })
            .collect();
        MlpDocument {
            format_version: FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            layers,
        }
    }

    pub fn from_document(doc: &MlpDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported network format_version {}",
                doc.format_version
            )));
        }
        let mut net = Self::zeros(&doc.layer_sizes)?;
        if doc.layers.len() != net.num_layers() {
            return Err(Error::DimensionMismatch {
                what: "layers",
                expected: net.num_layers(),
                got: doc.layers.len(),
            });
        }
        for (l, layer) in doc.layers.iter().enumerate() {
            let (w, b) = net.layer_mut(l);
            if layer.weights.len() != w.len() || layer.biases.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    what: "layer parameters",
                    expected: w.len() + b.len(),
                    got: layer.weights.len() + layer.biases.len(),
                });
            }
            w.iter_mut().zip(&layer.weights).for_each(|(d, &s)| *d = T::lit(s));
            b.iter_mut().zip(&layer.biases).for_each(|(d, &s)| *d = T::lit(s));
        }
        Ok(net)
    }
}

/// Per-layer activation and delta buffers reused across samples.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    activations: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
}

impl<T> Workspace<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("at least two layers")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// JSON form of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDocument {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected first and second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    first: Vec<T>,
    second: Vec<T>,
    step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first: vec![T::zero(); num_params],
            second: vec![T::zero(); num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `params` in place.
    pub fn adam_step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                what: "optimizer parameters",
                expected: self.first.len(),
                got: params.len().min(grads.len()),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::one() - T::lit(c.beta1.powi(self.step as i32));
        let bias2 = T::one() - T::lit(c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(c.learning_rate), T::lit(c.epsilon));
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = b1 * self.first[i] + (T::one() - b1) * g;
            self.second[i] = b2 * self.second[i] + (T::one() - b2) * g * g;
            let m_hat = self.first[i] / bias1;
            let v_hat = self.second[i] / bias2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Rescales `grads` to global norm `max_norm` if larger; returns whether it
/// clipped.
pub fn clip_global_norm<T: Real>(grads: &mut [T], max_norm: f64) -> bool {
    let norm = grads.iter().map(|g| *g * *g).sum::<T>().sqrt().as_f64();
    if norm > max_norm {
        let factor = T::lit(max_norm / norm);
        grads.iter_mut().for_each(|g| *g = *g * factor);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
    pub schedule: LrSchedule,
    pub seed: u64,
}

/// Learning-rate schedule over the optimization steps of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from the Adam learning rate down to `floor` times it.
    Cosine { floor: f64 },
}

impl LrSchedule {
    /// Multiplier at `step` of `total` steps.
    pub fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { floor } => {
                let progress = step as f64 / total.max(1) as f64;
                floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: None,
            adam: AdamConfig::default(),
            clip_norm: Some(10.0),
            schedule: LrSchedule::Constant,
            seed: 0,
        }
    }
}

/// Minimizes the mean of a per-sample loss over `inputs` with Adam.
///
/// `head(i, output, grad)` returns sample `i`'s loss given the network
/// output and writes `∂loss/∂output` into `grad`. Returns the mean loss of
/// each epoch.
pub fn train<T, F>(net: &mut Mlp<T>, inputs: &[Vec<T>], config: &TrainConfig, head: F) -> Result<Vec<f64>>
where
    T: Real,
    F: Fn(usize, &[T], &mut [T]) -> T,
{
    if inputs.is_empty() {
        return Err(Error::Empty("training inputs"));
    }
    let n = inputs.len();
    let batch = config.batch_size.unwrap_or(n).clamp(1, n);
    let mut opt = OptimizerState::new(net.num_params(), config.adam);
    let mut ws = net.workspace();
    let mut grads = vec![T::zero(); net.num_params()];
    let mut out_grad = vec![T::zero(); net.output_dim()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = random::stream(config.seed, 0x7472_6169_6e);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut clipped = 0usize;
    let total_steps = config.epochs * n.div_ceil(batch);
    let mut step = 0;
    for epoch in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            grads.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::from_len(chunk.len());
            for &i in chunk {
                net.forward_into(&inputs[i], &mut ws)?;
                out_grad.iter_mut().for_each(|g| *g = T::zero());
                let loss = head(i, ws.output(), &mut out_grad);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                epoch_loss += loss.as_f64();
                out_grad.iter_mut().for_each(|g| *g = *g * scale);
                net.backward_into(&mut ws, &out_grad, &mut grads)?;
            }
            if let Some(max_norm) = config.clip_norm {
                if clip_global_norm(&mut grads, max_norm) {
                    clipped += 1;
                }
            }
            opt.config.learning_rate = config.adam.learning_rate * config.schedule.factor(step, total_steps);
            opt.adam_step(net.params_mut(), &grads)?;
            step += 1;
        }
        if !net.all_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(epoch_loss / n as f64);
    }
    if clipped > 0 {
        log::debug!("gradient clipping triggered on {clipped} steps");
    }
    Ok(trace)
}
