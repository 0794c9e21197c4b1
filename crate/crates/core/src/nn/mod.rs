//! Minimal 1-D CNN engine: tensors, the five layer types with their
//! gradients, Adam, training and MAC accounting.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod macs;
pub mod model;
mod model_io;
mod real;
mod tensor;
pub mod train;

pub use activation::{
    global_avg_pool, global_avg_pool_backward, mse_batch_loss, mse_loss, relu, relu_backward,
};
pub use adam::{adam_step, AdamConfig, AdamState, ParamSlot};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_inference, BatchNormCache, BatchNormParams,
    BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{conv1d_backward, conv1d_forward, ConvParams};
pub use macs::count_macs;
pub use model::{
    classify, BatchTrace, Mode, Model, ModelConfig, ModelGrads, DECISION_THRESHOLD,
    DEFAULT_LENGTH, ENHANCED_CHANNELS, RAW_CHANNELS,
};
pub use model_io::{MODEL_FORMAT, MODEL_VERSION};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{train, train_with_report, training_accuracy, Example, TrainHyper, TrainReport};
