//! The convolutional template shared by the default CNN and the ECNN.
//!
//! ```text
//! input [3|6 × L] → (Conv1D → BatchNorm → ReLU) × (depth − 1)   [C × L]
//!                 → Conv1D                                      [1 × L]
//!                 → GlobalAveragePool                           [1 × 1]
//! ```
//!
//! The pooled value is the raw output; there is no final activation. Outputs
//! below 0.5 are classified normal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::{global_avg_pool, relu};
use crate::nn::batchnorm::{
    batchnorm_inference, normalize_backward_in_place, normalize_in_place, BatchNormParams,
};
use crate::nn::conv::{
    accumulate_param_grads, conv1d_forward_padded, input_grad, ConvParams, PaddedInput,
};
use crate::nn::{Real, Tensor};
use crate::rng::Rng;

/// Raw outputs at or above this value are classified abnormal.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub const DEFAULT_LENGTH: usize = 800;

/// Default CNN input: raw x, y, z.
pub const RAW_CHANNELS: usize = 3;
/// ECNN input: raw x, y, z followed by the scaled deviations from the normal mean.
pub const ENHANCED_CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub depth: usize,
    pub kernel: usize,
    pub channels: usize,
    pub enhanced: bool,
    pub length: usize,
}

impl ModelConfig {
    pub fn cnn(depth: usize, kernel: usize, channels: usize) -> Self {
        Self {
            depth,
            kernel,
            channels,
            enhanced: false,
            length: DEFAULT_LENGTH,
        }
    }

    pub fn ecnn(depth: usize, kernel: usize, channels: usize) -> Self {
        Self {
            enhanced: true,
            ..Self::cnn(depth, kernel, channels)
        }
    }

    pub fn with_length(self, length: usize) -> Self {
        Self { length, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::usage(format!(
                "depth must be at least 2, got {}",
                self.depth
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::usage(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.channels == 0 {
            return Err(Error::usage("channel count must be positive"));
        }
        if self.length == 0 {
            return Err(Error::usage("input length must be positive"));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        if self.enhanced {
            ENHANCED_CHANNELS
        } else {
            RAW_CHANNELS
        }
    }

    /// `(in_channels, out_channels)` of every convolution, first to last.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|i| {
                let input = if i == 0 {
                    self.input_channels()
                } else {
                    self.channels
                };
                let output = if i + 1 == self.depth { 1 } else { self.channels };
                (input, output)
            })
            .collect()
    }

    pub fn label(&self) -> &'static str {
        if self.enhanced {
            "ecnn"
        } else {
            "cnn"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Training,
    Inference,
}

/// Maps a raw output to a label: 0 (normal) below 0.5, 1 (abnormal) otherwise.
pub fn classify<T: Real>(output: T) -> u8 {
    u8::from(output.to_f64() >= DECISION_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub(crate) config: ModelConfig,
    pub(crate) convs: Vec<ConvParams<T>>,
    pub(crate) norms: Vec<BatchNormParams<T>>,
    pub(crate) mode: Mode,
}

/// Gradients of every trainable parameter, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T = f32> {
    pub convs: Vec<ConvParams<T>>,
    pub norms: Vec<BatchNormParams<T>>,
}

impl<T: Real> ModelGrads<T> {
    /// Flat view in the same order as [`Model::param_slices_mut`].
    pub fn slices(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), conv.weights.as_slice()));
            out.push((format!("conv{i}.bias"), conv.bias.as_slice()));
        }
        for (i, bn) in self.norms.iter().enumerate() {
            out.push((format!("bn{i}.gamma"), bn.gamma.as_slice()));
            out.push((format!("bn{i}.beta"), bn.beta.as_slice()));
        }
        out
    }
}

/// Intermediate values of a training-mode batch forward pass.
pub struct BatchTrace<T> {
    /// Padded input of every convolution, per sample.
    padded: Vec<Vec<PaddedInput<T>>>,
    /// Batch-normalized values (before γ, β) per hidden layer and sample.
    normalized: Vec<Vec<Tensor<T>>>,
    /// Per hidden layer, per channel `1 / sqrt(var + ε)`.
    inv_std: Vec<Vec<T>>,
    length: usize,
}

impl<T: Real> Model<T> {
    /// Model with every parameter zero except unit running variances.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_channels();
        let convs = shapes
            .iter()
            .map(|&(i, o)| ConvParams::zeros(i, o, config.kernel))
            .collect();
        let norms = shapes[..shapes.len() - 1]
            .iter()
            .map(|&(_, o)| {
                let mut bn = BatchNormParams::identity(o);
                bn.gamma.fill(T::zero());
                bn
            })
            .collect();
        Ok(Self {
            config,
            convs,
            norms,
            mode: Mode::Training,
        })
    }

    /// Fresh model for training.
    ///
    /// Convolution weights are uniform in `±sqrt(6 / fan_in)` with
    /// `fan_in = in_channels · K`; biases 0, γ = 1, β = 0.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        for conv in &mut model.convs {
            let bound = (6.0 / (conv.in_channels * conv.kernel) as f64).sqrt();
            for w in &mut conv.weights {
                *w = T::from_f64(rng.uniform_in(-bound, bound));
            }
        }
        for bn in &mut model.norms {
            bn.gamma.fill(T::one());
        }
        Ok(model)
    }

    /// Assembles a model from explicit layer parameters.
    pub fn from_parts(
        config: ModelConfig,
        convs: Vec<ConvParams<T>>,
        norms: Vec<BatchNormParams<T>>,
        mode: Mode,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_channels();
        if convs.len() != config.depth || norms.len() != config.depth - 1 {
            return Err(Error::structural(format!(
                "depth {} needs {} convolutions and {} batchnorms, got {} and {}",
                config.depth,
                config.depth,
                config.depth - 1,
                convs.len(),
                norms.len()
            )));
        }
        for (i, (conv, &(cin, cout))) in convs.iter().zip(&shapes).enumerate() {
            conv.validate()?;
            if conv.in_channels != cin || conv.out_channels != cout || conv.kernel != config.kernel
            {
                return Err(Error::structural(format!(
                    "layer {i} is {}→{} with K={}, expected {cin}→{cout} with K={}",
                    conv.in_channels, conv.out_channels, conv.kernel, config.kernel
                )));
            }
        }
        for (i, bn) in norms.iter().enumerate() {
            bn.validate()?;
            if bn.channels() != shapes[i].1 {
                return Err(Error::structural(format!(
                    "batchnorm {i} has {} channels, expected {}",
                    bn.channels(),
                    shapes[i].1
                )));
            }
        }
        Ok(Self {
            config,
            convs,
            norms,
            mode,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn convs(&self) -> &[ConvParams<T>] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.convs
    }

    pub fn norms(&self) -> &[BatchNormParams<T>] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNormParams<T>] {
        &mut self.norms
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn param_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.weights.len() + c.bias.len())
            .sum::<usize>()
            + self
                .norms
                .iter()
                .map(|b| b.gamma.len() + b.beta.len())
                .sum::<usize>()
    }

    /// Lengths of the trainable tensors, in [`Self::param_slices_mut`] order.
    pub fn param_shapes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push(c.weights.len());
            out.push(c.bias.len());
        }
        for b in &self.norms {
            out.push(b.gamma.len());
            out.push(b.beta.len());
        }
        out
    }

    /// Trainable tensors: conv weights and biases, then batchnorm γ and β.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            out.push(c.weights.as_mut_slice());
            out.push(c.bias.as_mut_slice());
        }
        for b in &mut self.norms {
            out.push(b.gamma.as_mut_slice());
            out.push(b.beta.as_mut_slice());
        }
        out
    }

    pub fn zero_grads(&self) -> ModelGrads<T> {
        ModelGrads {
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams::zeros(c.in_channels, c.out_channels, c.kernel))
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|b| BatchNormParams::zeros(b.channels()))
                .collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let expected = self.config.input_channels();
        if input.channels() != expected || input.length() != self.config.length {
            return Err(Error::structural(format!(
                "{} model expects input {}x{}, got {}x{}",
                self.config.label(),
                expected,
                self.config.length,
                input.channels(),
                input.length()
            )));
        }
        input.check_finite("model input")
    }

    /// Raw output for one input, using the frozen running statistics.
    ///
    /// The model must be in inference mode.
    pub fn forward(&self, input: &Tensor<T>) -> Result<T> {
        if self.mode != Mode::Inference {
            return Err(Error::usage(
                "forward requires a model in inference mode; training-mode statistics are batch dependent",
            ));
        }
        self.check_input(input)?;
        let pad = self.config.kernel / 2;
        let mut x = input.clone();
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            let y = conv1d_forward_padded(&PaddedInput::new(&x, pad), conv);
            x = relu(&batchnorm_inference(&y, bn));
        }
        let last = self.convs.last().expect("depth >= 2");
        let y = conv1d_forward_padded(&PaddedInput::new(&x, pad), last);
        global_avg_pool(&y)
    }

    /// Raw output and its label.
    pub fn predict(&self, input: &Tensor<T>) -> Result<(T, u8)> {
        let out = self.forward(input)?;
        Ok((out, classify(out)))
    }

    /// Training-mode forward pass over a batch.
    ///
    /// Uses batch statistics in every batchnorm layer and updates the running
    /// statistics. Returns the raw outputs and the trace for
    /// [`Self::backward_batch`]. Computes the same values as chaining
    /// [`conv1d_forward`](crate::nn::conv1d_forward),
    /// [`batchnorm_forward`](crate::nn::batchnorm_forward) and
    /// [`relu`](crate::nn::relu), with the normalization fused in place.
    pub fn forward_batch_train(&mut self, inputs: &[&Tensor<T>]) -> Result<(Vec<T>, BatchTrace<T>)> {
        for x in inputs {
            self.check_input(x)?;
        }
        if inputs.len() < 2 {
            return Err(Error::usage(format!(
                "training-mode forward needs at least 2 samples, got {}",
                inputs.len()
            )));
        }
        let pad = self.config.kernel / 2;
        let depth = self.config.depth;
        let length = self.config.length;
        let mut padded: Vec<Vec<PaddedInput<T>>> = Vec::with_capacity(depth);
        let mut normalized_all = Vec::with_capacity(depth - 1);
        let mut inv_std_all = Vec::with_capacity(depth - 1);

        let mut current: Vec<PaddedInput<T>> =
            inputs.iter().map(|x| PaddedInput::new(x, pad)).collect();
        for layer in 0..depth - 1 {
            let mut normalized: Vec<Tensor<T>> = current
                .iter()
                .map(|p| conv1d_forward_padded(p, &self.convs[layer]))
                .collect();
            padded.push(current);
            let inv_std = normalize_in_place(&mut normalized, &mut self.norms[layer]);
            let bn = &self.norms[layer];
            current = normalized
                .iter()
                .map(|xh| {
                    PaddedInput::from_fn(xh.channels(), length, pad, |c, t| {
                        let y = bn.gamma[c] * xh.get(c, t) + bn.beta[c];
                        if y > T::zero() {
                            y
                        } else {
                            T::zero()
                        }
                    })
                })
                .collect();
            normalized_all.push(normalized);
            inv_std_all.push(inv_std);
        }
        let outputs = current
            .iter()
            .map(|p| global_avg_pool(&conv1d_forward_padded(p, &self.convs[depth - 1])))
            .collect::<Result<Vec<T>>>()?;
        padded.push(current);
        Ok((
            outputs,
            BatchTrace {
                padded,
                normalized: normalized_all,
                inv_std: inv_std_all,
                length,
            },
        ))
    }

    /// Gradients of `Σ_b grad_outputs[b] · output_b` w.r.t. every parameter.
    pub fn backward_batch(&self, trace: &BatchTrace<T>, grad_outputs: &[T]) -> Result<ModelGrads<T>> {
        let batch = grad_outputs.len();
        if trace.padded.first().map(Vec::len) != Some(batch) {
            return Err(Error::structural(
                "output gradient count differs from the traced batch",
            ));
        }
        let depth = self.config.depth;
        let length = trace.length;
        let mut grads = self.zero_grads();
        let share = T::from_f64(1.0 / length as f64);
        let mut upstream: Vec<Tensor<T>> = grad_outputs
            .iter()
            .map(|&g| Tensor::from_raw(1, length, vec![g * share; length]))
            .collect();

        for layer in (0..depth).rev() {
            let conv = &self.convs[layer];
            for (g, p) in upstream.iter().zip(&trace.padded[layer]) {
                accumulate_param_grads(g, p, conv, &mut grads.convs[layer]);
            }
            if layer == 0 {
                break;
            }
            let hidden = layer - 1;
            let bn = &self.norms[hidden];
            let mut next: Vec<Tensor<T>> = upstream.iter().map(|g| input_grad(g, conv)).collect();
            // ReLU gate: pass where γ·x̂ + β > 0.
            for (g, xh) in next.iter_mut().zip(&trace.normalized[hidden]) {
                for c in 0..g.channels() {
                    let (gamma, beta) = (bn.gamma[c], bn.beta[c]);
                    for (d, &x) in g.row_mut(c).iter_mut().zip(xh.row(c)) {
                        if gamma * x + beta <= T::zero() {
                            *d = T::zero();
                        }
                    }
                }
            }
            normalize_backward_in_place(
                &mut next,
                &trace.normalized[hidden],
                &trace.inv_std[hidden],
                bn,
                &mut grads.norms[hidden],
            );
            upstream = next;
        }
        Ok(grads)
    }

    /// Converts the element type, e.g. an `f64` model to `f32` for export.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let conv = |c: &ConvParams<T>| ConvParams {
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            weights: c.weights.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            bias: c.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        };
        let cv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        Model {
            config: self.config,
            convs: self.convs.iter().map(conv).collect(),
            norms: self
                .norms
                .iter()
                .map(|b| BatchNormParams {
                    gamma: cv(&b.gamma),
                    beta: cv(&b.beta),
                    running_mean: cv(&b.running_mean),
                    running_var: cv(&b.running_var),
                })
                .collect(),
            mode: self.mode,
        }
    }
}
