use crate::error::{Error, Result};
use crate::nn::conv::sum;
use crate::nn::{Real, Tensor};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `grad` where the forward input was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if input.channels() != grad.channels() || input.length() != grad.length() {
        return Err(Error::structural("relu gradient shape differs from input"));
    }
    let values = input
        .values()
        .iter()
        .zip(grad.values())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_raw(input.channels(), input.length(), values))
}

/// Mean over the length of a single-channel map.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<T> {
    if input.channels() != 1 {
        return Err(Error::structural(format!(
            "global average pool expects 1 channel, got {}",
            input.channels()
        )));
    }
    Ok(sum(input.values()) / T::from_f64(input.length() as f64))
}

pub fn global_avg_pool_backward<T: Real>(grad: T, length: usize) -> Tensor<T> {
    let share = grad / T::from_f64(length as f64);
    Tensor::from_raw(1, length, vec![share; length])
}

/// Squared error against a binary target: `(loss, d loss / d prediction)`.
pub fn mse_loss<T: Real>(prediction: T, target: u8) -> (T, T) {
    let diff = prediction - T::from_f64(f64::from(target));
    (diff * diff, T::from_f64(2.0) * diff)
}

/// Mean squared error over a batch of `(prediction, target)` pairs.
pub fn mse_batch_loss<T: Real>(pairs: &[(T, u8)]) -> T {
    let mut total = T::zero();
    for &(p, y) in pairs {
        total += mse_loss(p, y).0;
    }
    total / T::from_f64(pairs.len() as f64)
}
