use crate::error::{Error, Result};
use crate::nn::conv::{dot, sum};
use crate::nn::{Mode, Real, Tensor};

/// Added to the variance before taking the square root.
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel affine parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormParams<T> {
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            gamma: vec![T::zero(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::zero(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(Error::structural("batchnorm parameter lengths differ"));
        }
        Ok(())
    }
}

/// Values the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub normalized: Vec<Tensor<T>>,
    pub inv_std: Vec<T>,
}

fn check_batch<T: Real>(batch: &[Tensor<T>], params: &BatchNormParams<T>) -> Result<()> {
    params.validate()?;
    let first = batch
        .first()
        .ok_or_else(|| Error::usage("batchnorm needs a nonempty batch"))?;
    if batch
        .iter()
        .any(|t| t.channels() != first.channels() || t.length() != first.length())
    {
        return Err(Error::structural("batch tensors differ in shape"));
    }
    if first.channels() != params.channels() {
        return Err(Error::structural(format!(
            "batchnorm has {} channels, input has {}",
            params.channels(),
            first.channels()
        )));
    }
    Ok(())
}

/// Inference-mode normalization of one tensor with the running statistics.
pub fn batchnorm_inference<T: Real>(input: &Tensor<T>, params: &BatchNormParams<T>) -> Tensor<T> {
    let eps = T::from_f64(BN_EPSILON);
    let mut out = input.clone();
    for c in 0..input.channels() {
        let scale = params.gamma[c] / (params.running_var[c] + eps).sqrt();
        let shift = params.beta[c] - params.running_mean[c] * scale;
        for v in out.row_mut(c) {
            *v = *v * scale + shift;
        }
    }
    out
}

/// Replaces each channel of the batch with its batch-normalized values x̂
/// (before γ and β), updates the running statistics and returns the
/// per-channel `1 / sqrt(var + ε)`. The batch must hold at least 2 tensors.
pub(crate) fn normalize_in_place<T: Real>(
    batch: &mut [Tensor<T>],
    params: &mut BatchNormParams<T>,
) -> Vec<T> {
    let channels = params.channels();
    let n = (batch.len() * batch[0].length()) as f64;
    let eps = T::from_f64(BN_EPSILON);
    let momentum = T::from_f64(BN_MOMENTUM);
    let keep = T::one() - momentum;
    let mut inv_std = vec![T::zero(); channels];
    for c in 0..channels {
        let mut total = T::zero();
        for t in batch.iter() {
            total += sum(t.row(c));
        }
        let mean = T::from_f64(total.to_f64() / n);
        let mut sq = T::zero();
        for t in batch.iter_mut() {
            let row = t.row_mut(c);
            for v in row.iter_mut() {
                *v -= mean;
            }
            sq += dot(row, row);
        }
        let var = T::from_f64(sq.to_f64() / n);
        let unbiased = T::from_f64(sq.to_f64() / (n - 1.0));
        let istd = T::one() / (var + eps).sqrt();
        inv_std[c] = istd;
        params.running_mean[c] = keep * params.running_mean[c] + momentum * mean;
        params.running_var[c] = keep * params.running_var[c] + momentum * unbiased;
        for t in batch.iter_mut() {
            for v in t.row_mut(c) {
                *v *= istd;
            }
        }
    }
    inv_std
}

/// Turns output gradients into input gradients in place and accumulates the
/// γ and β gradients.
///
/// `dx = γ·istd/N · (N·dy − Σdy − x̂·Σ(dy·x̂))`
pub(crate) fn normalize_backward_in_place<T: Real>(
    grad: &mut [Tensor<T>],
    normalized: &[Tensor<T>],
    inv_std: &[T],
    params: &BatchNormParams<T>,
    grads: &mut BatchNormParams<T>,
) {
    let n = T::from_f64((grad.len() * grad[0].length()) as f64);
    for c in 0..params.channels() {
        let mut dbeta = T::zero();
        let mut dgamma = T::zero();
        for (g, xh) in grad.iter().zip(normalized) {
            dbeta += sum(g.row(c));
            dgamma += dot(g.row(c), xh.row(c));
        }
        grads.beta[c] += dbeta;
        grads.gamma[c] += dgamma;
        let scale = params.gamma[c] * inv_std[c] / n;
        for (g, xh) in grad.iter_mut().zip(normalized) {
            for (d, &x) in g.row_mut(c).iter_mut().zip(xh.row(c)) {
                *d = scale * (n * *d - dbeta - x * dgamma);
            }
        }
    }
}

/// Batch normalization forward pass.
///
/// In training mode the batch statistics over (batch × length) normalize each
/// channel and the running statistics are updated in place; the running
/// variance uses the unbiased estimate. Inference mode leaves `params`
/// untouched and returns no cache.
pub fn batchnorm_forward<T: Real>(
    batch: &[Tensor<T>],
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Vec<Tensor<T>>, Option<BatchNormCache<T>>)> {
    check_batch(batch, params)?;
    if mode == Mode::Inference {
        let out = batch
            .iter()
            .map(|t| batchnorm_inference(t, params))
            .collect();
        return Ok((out, None));
    }
    if batch.len() < 2 {
        return Err(Error::usage(format!(
            "batchnorm in training mode needs at least 2 samples, got {}",
            batch.len()
        )));
    }
    let mut normalized = batch.to_vec();
    let inv_std = normalize_in_place(&mut normalized, params);
    let out = normalized
        .iter()
        .map(|xh| {
            let mut y = xh.clone();
            for c in 0..y.channels() {
                let (g, b) = (params.gamma[c], params.beta[c]);
                for v in y.row_mut(c) {
                    *v = g * *v + b;
                }
            }
            y
        })
        .collect();
    Ok((out, Some(BatchNormCache { normalized, inv_std })))
}

/// Backward pass of a training-mode forward pass.
///
/// Accumulates γ and β gradients into `grads` and returns input gradients.
pub fn batchnorm_backward<T: Real>(
    grad_out: &[Tensor<T>],
    cache: &BatchNormCache<T>,
    params: &BatchNormParams<T>,
    grads: &mut BatchNormParams<T>,
) -> Result<Vec<Tensor<T>>> {
    if grad_out.len() != cache.normalized.len() {
        return Err(Error::structural(format!(
            "batchnorm backward got {} gradients for a batch of {}",
            grad_out.len(),
            cache.normalized.len()
        )));
    }
    check_batch(grad_out, params)?;
    let mut grad_in = grad_out.to_vec();
    normalize_backward_in_place(&mut grad_in, &cache.normalized, &cache.inv_std, params, grads);
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_channel_maps_to_beta() {
        let batch = vec![
            Tensor::from_vec(1, 4, vec![3.0f64; 4]).unwrap(),
            Tensor::from_vec(1, 4, vec![3.0f64; 4]).unwrap(),
        ];
        let mut p = BatchNormParams::identity(1);
        p.beta[0] = 0.7;
        let (out, _) = batchnorm_forward(&batch, &mut p, Mode::Training).unwrap();
        for t in &out {
            assert!(t.values().iter().all(|&v| v == 0.7));
        }
    }

    #[test]
    fn training_output_is_standardized() {
        let mut rng = Rng::new(4);
        let batch: Vec<_> = (0..5)
            .map(|_| {
                let v = (0..60).map(|_| 3.0 + 10.0 * rng.normal()).collect();
                Tensor::from_vec(3, 20, v).unwrap()
            })
            .collect();
        let mut p = BatchNormParams::<f64>::identity(3);
        let (out, _) = batchnorm_forward(&batch, &mut p, Mode::Training).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = out.iter().flat_map(|t| t.row(c).to_vec()).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6);
            // σ = 10 keeps the ε shrinkage (about ε/σ²) below the tolerance.
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn inference_uses_running_statistics() {
        let mut p = BatchNormParams::<f64> {
            gamma: vec![3.0],
            beta: vec![1.0],
            running_mean: vec![2.0],
            running_var: vec![4.0],
        };
        let input = vec![Tensor::from_vec(1, 1, vec![4.0]).unwrap()];
        let (out, cache) = batchnorm_forward(&input, &mut p, Mode::Inference).unwrap();
        assert!(cache.is_none());
        let expected = 3.0 * (4.0 - 2.0) / (4.0 + BN_EPSILON).sqrt() + 1.0;
        assert!((out[0].get(0, 0) - expected).abs() < 1e-12);
        assert!((expected - 4.0).abs() < 1e-5);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let batch = vec![
            Tensor::from_vec(1, 2, vec![0.0f64, 2.0]).unwrap(),
            Tensor::from_vec(1, 2, vec![4.0, 6.0]).unwrap(),
        ];
        let mut p = BatchNormParams::identity(1);
        batchnorm_forward(&batch, &mut p, Mode::Training).unwrap();
        // batch mean 3, unbiased variance 20/3
        assert!((p.running_mean[0] - 0.3).abs() < 1e-12);
        assert!((p.running_var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn single_sample_training_batch_is_rejected() {
        let batch = vec![Tensor::<f64>::zeros(1, 3)];
        let mut p = BatchNormParams::identity(1);
        assert!(matches!(
            batchnorm_forward(&batch, &mut p, Mode::Training),
            Err(Error::Usage(_))
        ));
    }
}
