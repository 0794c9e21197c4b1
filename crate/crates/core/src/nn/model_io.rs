//! Model JSON document.
//!
//! Field order is fixed; every number is an `f32` written in shortest
//! round-trip decimal form:
//!
//! ```json
//! {
//!   "format": "pump-anomaly-model",
//!   "version": 1,
//!   "config": {"depth": 4, "kernel": 11, "channels": 5, "enhanced": true, "length": 800},
//!   "mode": "inference",
//!   "layers": [
//!     {
//!       "in_channels": 6, "out_channels": 5, "kernel": 11,
//!       "weights": [...],          // out_channels × in_channels × kernel, row-major
//!       "bias": [...],             // out_channels
//!       "batchnorm": {"gamma": [...], "beta": [...], "running_mean": [...], "running_var": [...]}
//!     },
//!     ...
//!     { ..., "batchnorm": null }   // last layer, one output channel
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, ConvParams, Mode, Model, ModelConfig, Real};

pub const MODEL_FORMAT: &str = "pump-anomaly-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct BatchNormDoc {
    gamma: Vec<f32>,
    beta: Vec<f32>,
    running_mean: Vec<f32>,
    running_var: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    batchnorm: Option<BatchNormDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    config: ModelConfig,
    mode: Mode,
    layers: Vec<LayerDoc>,
}

fn to_f32<T: Real>(v: &[T]) -> Vec<f32> {
    v.iter().map(|x| x.to_f64() as f32).collect()
}

impl<T: Real> Model<T> {
    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .convs
            .iter()
            .enumerate()
            .map(|(i, c)| LayerDoc {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                weights: to_f32(&c.weights),
                bias: to_f32(&c.bias),
                batchnorm: self.norms.get(i).map(|b| BatchNormDoc {
                    gamma: to_f32(&b.gamma),
                    beta: to_f32(&b.beta),
                    running_mean: to_f32(&b.running_mean),
                    running_var: to_f32(&b.running_var),
                }),
            })
            .collect();
        let doc = ModelDoc {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: self.config,
            mode: self.mode,
            layers,
        };
        let mut s = serde_json::to_string(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

impl Model<f32> {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::structural(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let depth = doc.layers.len();
        let mut convs = Vec::with_capacity(depth);
        let mut norms = Vec::with_capacity(depth.saturating_sub(1));
        for (i, layer) in doc.layers.into_iter().enumerate() {
            convs.push(ConvParams::new(
                layer.in_channels,
                layer.out_channels,
                layer.kernel,
                layer.weights,
                layer.bias,
            )?);
            match (layer.batchnorm, i + 1 == depth) {
                (Some(b), false) => norms.push(BatchNormParams {
                    gamma: b.gamma,
                    beta: b.beta,
                    running_mean: b.running_mean,
                    running_var: b.running_var,
                }),
                (None, true) => {}
                (Some(_), true) => {
                    return Err(Error::structural("last layer must not have batchnorm"))
                }
                (None, false) => {
                    return Err(Error::structural(format!("layer {i} is missing batchnorm")))
                }
            }
        }
        let all_finite = convs
            .iter()
            .flat_map(|c| c.weights.iter().chain(&c.bias))
            .chain(norms.iter().flat_map(|b| {
                b.gamma
                    .iter()
                    .chain(&b.beta)
                    .chain(&b.running_mean)
                    .chain(&b.running_var)
            }))
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::numeric("model document holds non-finite parameters"));
        }
        Model::from_parts(doc.config, convs, norms, doc.mode)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
