use crate::nn::ModelConfig;

/// Multiply-accumulates to process one input of `config.length` samples.
///
/// Only convolutions count: `Σ_layers L · K · in_ch · out_ch`. Bias adds,
/// batch normalization, ReLU and pooling are excluded.
pub fn count_macs(config: &ModelConfig) -> u64 {
    config
        .layer_channels()
        .iter()
        .map(|&(i, o)| (config.length * config.kernel * i * o) as u64)
        .sum()
}
