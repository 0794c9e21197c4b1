use crate::data::{NormalMean, VibrationSample};
use crate::error::{Error, Result};
use crate::nn::{classify, Model, Real, Tensor, ENHANCED_CHANNELS, RAW_CHANNELS};

/// Raw `3 × L` input of the default CNN.
pub fn build_cnn_input<T: Real>(sample: &VibrationSample) -> Tensor<T> {
    let length = sample.x.len();
    let mut values = Vec::with_capacity(RAW_CHANNELS * length);
    for axis in sample.axes() {
        values.extend(axis.iter().map(|&v| T::from_f64(v)));
    }
    Tensor::from_raw(RAW_CHANNELS, length, values)
}

/// `6 × L` ECNN input: the raw axes followed by `F · (d − μ_d)` per axis.
pub fn build_ecnn_input<T: Real>(sample: &VibrationSample, mean: &NormalMean, factor: f64) -> Tensor<T> {
    let length = sample.x.len();
    let mut values = Vec::with_capacity(ENHANCED_CHANNELS * length);
    for axis in sample.axes() {
        values.extend(axis.iter().map(|&v| T::from_f64(v)));
    }
    for (axis, mu) in sample.axes().into_iter().zip(mean.as_array()) {
        values.extend(axis.iter().map(|&v| T::from_f64(factor * (v - mu))));
    }
    Tensor::from_raw(ENHANCED_CHANNELS, length, values)
}

fn expect_channels<T: Real>(model: &Model<T>, channels: usize, what: &str) -> Result<()> {
    let have = model.config().input_channels();
    if have != channels {
        return Err(Error::structural(format!(
            "{what} needs a model with {channels} input channels, got {have}"
        )));
    }
    Ok(())
}

/// Raw output and label of the default CNN.
pub fn cnn_predict<T: Real>(model: &Model<T>, sample: &VibrationSample) -> Result<(f64, u8)> {
    expect_channels(model, RAW_CHANNELS, "cnn prediction")?;
    let out = model.forward(&build_cnn_input(sample))?;
    Ok((out.to_f64(), classify(out)))
}

/// Raw output and label of the ECNN for one pump's mean and factor.
pub fn ecnn_predict<T: Real>(
    model: &Model<T>,
    sample: &VibrationSample,
    mean: &NormalMean,
    factor: f64,
) -> Result<(f64, u8)> {
    expect_channels(model, ENHANCED_CHANNELS, "ecnn prediction")?;
    let out = model.forward(&build_ecnn_input(sample, mean, factor))?;
    Ok((out.to_f64(), classify(out)))
}

/// ECNN labels of `samples` for one factor.
pub fn ecnn_labels<T: Real>(
    model: &Model<T>,
    samples: &[&VibrationSample],
    mean: &NormalMean,
    factor: f64,
) -> Result<Vec<u8>> {
    samples
        .iter()
        .map(|s| ecnn_predict(model, s, mean, factor).map(|(_, l)| l))
        .collect()
}
