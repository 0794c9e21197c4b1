//! Stride-1, zero same-padded 1-D convolution.
//!
//! ```text
//! out[o][t] = bias[o] + sum_{c,k} w[o][c][k] * x_pad[c][t + k]
//! x_pad[c]  = [0; (K-1)/2] ++ x[c] ++ [0; (K-1)/2]
//! ```
//!
//! Weights are stored flat as `w[(o * in_ch + c) * K + k]`. The inner loops
//! run over fixed-width blocks of output positions so they vectorize without
//! changing the summation order, which keeps results bit-reproducible.

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

const BLOCK: usize = 16;

/// Weights and bias of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weights: vec![T::zero(); out_channels * in_channels * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        let p = Self {
            in_channels,
            out_channels,
            kernel,
            weights,
            bias,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::structural(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::structural("convolution channels must be positive"));
        }
        if self.weights.len() != self.out_channels * self.in_channels * self.kernel {
            return Err(Error::structural(format!(
                "weights hold {} values, expected {}x{}x{}",
                self.weights.len(),
                self.out_channels,
                self.in_channels,
                self.kernel
            )));
        }
        if self.bias.len() != self.out_channels {
            return Err(Error::structural(format!(
                "bias holds {} values, expected {}",
                self.bias.len(),
                self.out_channels
            )));
        }
        Ok(())
    }

    pub fn weight(&self, o: usize, c: usize, k: usize) -> T {
        self.weights[(o * self.in_channels + c) * self.kernel + k]
    }

    fn kernel_row(&self, o: usize, c: usize) -> &[T] {
        let start = (o * self.in_channels + c) * self.kernel;
        &self.weights[start..start + self.kernel]
    }

    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Number of multiply-accumulates for one input of the given length.
    pub fn macs(&self, length: usize) -> u64 {
        (length * self.kernel * self.in_channels * self.out_channels) as u64
    }
}

/// Input with `(K-1)/2` zeros on both ends of every channel.
#[derive(Debug, Clone)]
pub struct PaddedInput<T> {
    channels: usize,
    length: usize,
    pad: usize,
    values: Vec<T>,
}

impl<T: Real> PaddedInput<T> {
    pub fn new(input: &Tensor<T>, pad: usize) -> Self {
        let length = input.length();
        let width = length + 2 * pad;
        let mut values = vec![T::zero(); input.channels() * width];
        for c in 0..input.channels() {
            values[c * width + pad..c * width + pad + length].copy_from_slice(input.row(c));
        }
        Self {
            channels: input.channels(),
            length,
            pad,
            values,
        }
    }

    /// Padded map whose interior is `f(channel, position)`.
    pub(crate) fn from_fn(
        channels: usize,
        length: usize,
        pad: usize,
        f: impl Fn(usize, usize) -> T,
    ) -> Self {
        let width = length + 2 * pad;
        let mut values = vec![T::zero(); channels * width];
        for c in 0..channels {
            for (t, v) in values[c * width + pad..c * width + pad + length]
                .iter_mut()
                .enumerate()
            {
                *v = f(c, t);
            }
        }
        Self {
            channels,
            length,
            pad,
            values,
        }
    }

    fn row(&self, c: usize) -> &[T] {
        let width = self.length + 2 * self.pad;
        &self.values[c * width..(c + 1) * width]
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }
}

/// Dot product with a fixed blocked summation order.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); BLOCK];
    let full = a.len() - a.len() % BLOCK;
    for (ca, cb) in a[..full]
        .chunks_exact(BLOCK)
        .zip(b[..full].chunks_exact(BLOCK))
    {
        for j in 0..BLOCK {
            acc[j] += ca[j] * cb[j];
        }
    }
    let mut total = T::zero();
    for v in acc {
        total += v;
    }
    for i in full..a.len() {
        total += a[i] * b[i];
    }
    total
}

/// Sum with the same blocked order as [`dot`].
#[inline]
pub(crate) fn sum<T: Real>(a: &[T]) -> T {
    let mut acc = [T::zero(); BLOCK];
    let full = a.len() - a.len() % BLOCK;
    for chunk in a[..full].chunks_exact(BLOCK) {
        for j in 0..BLOCK {
            acc[j] += chunk[j];
        }
    }
    let mut total = T::zero();
    for v in acc {
        total += v;
    }
    for &v in &a[full..] {
        total += v;
    }
    total
}

fn check_input<T: Real>(input_channels: usize, params: &ConvParams<T>) -> Result<()> {
    params.validate()?;
    if input_channels != params.in_channels {
        return Err(Error::structural(format!(
            "convolution expects {} input channels, got {}",
            params.in_channels, input_channels
        )));
    }
    Ok(())
}

pub fn conv1d_forward<T: Real>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    check_input(input.channels(), params)?;
    input.check_finite("convolution input")?;
    let padded = PaddedInput::new(input, params.padding());
    Ok(conv1d_forward_padded(&padded, params))
}

/// Forward pass on an already padded input; shapes must have been checked.
pub(crate) fn conv1d_forward_padded<T: Real>(
    padded: &PaddedInput<T>,
    params: &ConvParams<T>,
) -> Tensor<T> {
    let length = padded.length;
    let mut out = vec![T::zero(); params.out_channels * length];
    for (o, out_row) in out.chunks_exact_mut(length).enumerate() {
        out_row.fill(params.bias[o]);
    }
    multi_correlate(&mut out, padded, &params.weights, params.kernel);
    Tensor::from_raw(params.out_channels, length, out)
}

/// `out[r][t] += sum_{i,k} w[r][i][k] * x[i][t + k]` for every output row.
///
/// Rows are processed in tiles that share each input load; every element
/// still accumulates in ascending `(i, k)` order.
fn multi_correlate<T: Real>(out: &mut [T], inputs: &PaddedInput<T>, weights: &[T], kernel: usize) {
    let rows = out.len() / inputs.length;
    let mut r0 = 0;
    while r0 < rows {
        r0 += match rows - r0 {
            n if n >= 4 => correlate_tile::<T, 4>(out, inputs, weights, kernel, r0),
            n if n >= 2 => correlate_tile::<T, 2>(out, inputs, weights, kernel, r0),
            _ => correlate_tile::<T, 1>(out, inputs, weights, kernel, r0),
        };
    }
}

#[inline(always)]
fn correlate_tile<T: Real, const R: usize>(
    out: &mut [T],
    inputs: &PaddedInput<T>,
    weights: &[T],
    kernel: usize,
    r0: usize,
) -> usize {
    let length = inputs.length;
    let n_in = inputs.channels;
    let w = |r: usize, i: usize, k: usize| weights[((r0 + r) * n_in + i) * kernel + k];
    let mut start = 0;
    while start + BLOCK <= length {
        let mut acc = [[T::zero(); BLOCK]; R];
        for (r, a) in acc.iter_mut().enumerate() {
            let at = (r0 + r) * length + start;
            a.copy_from_slice(&out[at..at + BLOCK]);
        }
        for i in 0..n_in {
            let x = &inputs.row(i)[start..start + BLOCK + kernel - 1];
            let wr: [&[T]; R] = std::array::from_fn(|r| {
                let at = ((r0 + r) * n_in + i) * kernel;
                &weights[at..at + kernel]
            });
            for k in 0..kernel {
                let xs: &[T; BLOCK] = x[k..k + BLOCK].try_into().expect("block");
                for (a, w) in acc.iter_mut().zip(&wr) {
                    let wk = w[k];
                    for j in 0..BLOCK {
                        a[j] += wk * xs[j];
                    }
                }
            }
        }
        for (r, a) in acc.iter().enumerate() {
            let at = (r0 + r) * length + start;
            out[at..at + BLOCK].copy_from_slice(a);
        }
        start += BLOCK;
    }
    for t in start..length {
        for r in 0..R {
            let mut a = out[(r0 + r) * length + t];
            for i in 0..n_in {
                let x = inputs.row(i);
                for k in 0..kernel {
                    a += w(r, i, k) * x[t + k];
                }
            }
            out[(r0 + r) * length + t] = a;
        }
    }
    R
}

/// Gradients of a scalar loss w.r.t. the convolution's input, weights, bias.
///
/// `input` is the tensor the forward pass consumed. Weight and bias gradients
/// are accumulated into `grads` so a batch can sum into one buffer.
pub fn conv1d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grads: &mut ConvParams<T>,
) -> Result<Tensor<T>> {
    check_input(input.channels(), params)?;
    if grad_out.channels() != params.out_channels || grad_out.length() != input.length() {
        return Err(Error::structural(format!(
            "upstream gradient is {}x{}, forward output was {}x{}",
            grad_out.channels(),
            grad_out.length(),
            params.out_channels,
            input.length()
        )));
    }
    if grads.weights.len() != params.weights.len() || grads.bias.len() != params.bias.len() {
        return Err(Error::structural("gradient buffer does not match layer"));
    }
    let padded = PaddedInput::new(input, params.padding());
    accumulate_param_grads(grad_out, &padded, params, grads);
    Ok(input_grad(grad_out, params))
}

pub(crate) fn accumulate_param_grads<T: Real>(
    grad_out: &Tensor<T>,
    padded: &PaddedInput<T>,
    params: &ConvParams<T>,
    grads: &mut ConvParams<T>,
) {
    let length = padded.length;
    let kernel = params.kernel;
    for o in 0..params.out_channels {
        let g = grad_out.row(o);
        grads.bias[o] += sum(g);
        for c in 0..params.in_channels {
            let x = padded.row(c);
            let base = (o * params.in_channels + c) * kernel;
            for k in 0..kernel {
                grads.weights[base + k] += dot(g, &x[k..k + length]);
            }
        }
    }
}

/// `grad_in[c][t] = sum_{o,k} w[o][c][k] * g_pad[o][t + K - 1 - k]`, i.e. a
/// correlation of the padded upstream gradient with the flipped, transposed
/// kernel.
pub(crate) fn input_grad<T: Real>(grad_out: &Tensor<T>, params: &ConvParams<T>) -> Tensor<T> {
    let length = grad_out.length();
    let padded = PaddedInput::new(grad_out, params.padding());
    let kernel = params.kernel;
    let mut flipped = vec![T::zero(); params.weights.len()];
    for c in 0..params.in_channels {
        for o in 0..params.out_channels {
            let dst = (c * params.out_channels + o) * kernel;
            for (d, &w) in flipped[dst..dst + kernel].iter_mut().zip(params.kernel_row(o, c).iter().rev()) {
                *d = w;
            }
        }
    }
    let mut out = vec![T::zero(); params.in_channels * length];
    multi_correlate(&mut out, &padded, &flipped, kernel);
    Tensor::from_raw(params.in_channels, length, out)
}
