//! Threshold, default CNN, ECNN and combined detectors, and the per-pump
//! parameter selection that adapts them to an unseen pump.

mod network;
mod select;
mod threshold;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{compute_normal_mean, DatasetView, NormalMean, VibrationSample};
use crate::error::{Error, Result};
use crate::nn::{Example, Model, Real};
use crate::rng::Rng;

pub use network::{build_cnn_input, build_ecnn_input, cnn_predict, ecnn_labels, ecnn_predict};
pub use select::{
    select_factor_fpr, select_param_fixed, select_param_optimal, select_threshold_fixed,
    select_threshold_optimal,
};
pub use threshold::{
    select_threshold_fpr, threshold_candidates, threshold_epsilon, threshold_predict, GUARD_MARGIN,
};

pub const DEFAULT_TARGET_FPR: f64 = 0.10;

/// Range of the log-uniform factor drawn for every ECNN training sample.
pub const TRAIN_FACTOR_RANGE: (f64, f64) = (0.01, 100.0);

/// Geometric factor grid `100 · 0.8^k`, descending, down to `1e-3`.
pub fn default_factor_grid() -> Vec<f64> {
    (0..)
        .map(|k| 100.0 * 0.8f64.powi(k))
        .take_while(|&f| f >= 1e-3)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Best value on labeled data of the pump itself; an oracle.
    Optimal,
    /// One value for all pumps, tuned on the training pumps.
    Fixed,
    /// Tracks the false positive rate on normal adaptation samples.
    Fpr,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Fixed => "fixed",
            PolicyKind::Fpr => "fpr",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(PolicyKind::Optimal),
            "fixed" => Ok(PolicyKind::Fixed),
            "fpr" => Ok(PolicyKind::Fpr),
            other => Err(Error::usage(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub kind: PolicyKind,
    pub target_fpr: f64,
    /// Factor candidates, strictly descending.
    pub grid: Vec<f64>,
    /// The shared value of the fixed policy once it has been tuned.
    pub fixed_value: Option<f64>,
}

impl SelectionPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            target_fpr: DEFAULT_TARGET_FPR,
            grid: default_factor_grid(),
            fixed_value: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::usage(format!(
                "target FPR must lie in (0, 1), got {}",
                self.target_fpr
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::usage("factor grid is empty"));
        }
        if self.grid.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::usage("factor grid values must be positive and finite"));
        }
        if self.grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::usage("factor grid must be strictly descending"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Threshold,
    Ecnn,
}

impl DetectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Threshold => "threshold",
            DetectorKind::Ecnn => "ecnn",
        }
    }
}

/// Adaptation state of one pump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpProfile {
    pub pump_id: String,
    pub normal_mean: NormalMean,
    pub threshold: Option<f64>,
    pub factor: Option<f64>,
    pub chosen_detector: Option<DetectorKind>,
    pub policy: SelectionPolicy,
}

fn positive(name: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(Error::numeric(format!(
            "{name} must be positive and finite, got {v}"
        ))),
        _ => Ok(()),
    }
}

impl PumpProfile {
    pub fn new(pump_id: impl Into<String>, normal_mean: NormalMean, policy: SelectionPolicy) -> Self {
        Self {
            pump_id: pump_id.into(),
            normal_mean,
            threshold: None,
            factor: None,
            chosen_detector: None,
            policy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.normal_mean.is_finite() {
            return Err(Error::numeric("profile normal mean is not finite"));
        }
        positive("threshold", self.threshold)?;
        positive("factor", self.factor)?;
        match self.chosen_detector {
            Some(DetectorKind::Threshold) if self.threshold.is_none() => {
                Err(Error::usage("threshold detector chosen without a threshold"))
            }
            Some(DetectorKind::Ecnn) if self.factor.is_none() => {
                Err(Error::usage("ecnn detector chosen without a factor"))
            }
            _ => Ok(()),
        }
    }

    /// Threshold detector label of `sample`.
    pub fn predict_threshold(&self, sample: &VibrationSample) -> Result<u8> {
        let t = self
            .threshold
            .ok_or_else(|| Error::usage(format!("pump '{}' has no threshold", self.pump_id)))?;
        Ok(threshold_predict(threshold_epsilon(sample, &self.normal_mean), t))
    }

    /// ECNN label of `sample`.
    pub fn predict_ecnn<T: Real>(&self, model: &Model<T>, sample: &VibrationSample) -> Result<u8> {
        let f = self
            .factor
            .ok_or_else(|| Error::usage(format!("pump '{}' has no factor", self.pump_id)))?;
        ecnn_predict(model, sample, &self.normal_mean, f).map(|(_, l)| l)
    }

    /// Label from the chosen detector.
    pub fn predict<T: Real>(&self, model: &Model<T>, sample: &VibrationSample) -> Result<u8> {
        match self.chosen_detector {
            Some(DetectorKind::Threshold) => self.predict_threshold(sample),
            Some(DetectorKind::Ecnn) => self.predict_ecnn(model, sample),
            None => Err(Error::usage(format!(
                "pump '{}' has no chosen detector",
                self.pump_id
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: Self = serde_json::from_str(text)?;
        profile.policy.validate()?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Network inputs for training on `view`.
///
/// ECNN inputs use each pump's mean over its normal samples in the view and a
/// factor drawn log-uniformly from [`TRAIN_FACTOR_RANGE`] per sample, in view
/// order, from a generator seeded with `factor_seed`.
pub fn training_examples(view: &DatasetView<'_>, enhanced: bool, factor_seed: u64) -> Result<Vec<Example<f32>>> {
    if !enhanced {
        return Ok(view
            .samples()
            .map(|s| Example {
                input: build_cnn_input(s),
                label: s.label,
            })
            .collect());
    }
    let mut means = indexmap::IndexMap::new();
    for (pump, samples) in view.by_pump() {
        let mean = compute_normal_mean(samples.iter().copied()).map_err(|_| {
            Error::usage(format!("training pump '{pump}' has no normal samples"))
        })?;
        means.insert(pump, mean);
    }
    let mut rng = Rng::new(factor_seed);
    let (lo, hi) = TRAIN_FACTOR_RANGE;
    Ok(view
        .samples()
        .map(|s| Example {
            input: build_ecnn_input(s, &means[s.pump_id.as_str()], rng.log_uniform(lo, hi)),
            label: s.label,
        })
        .collect())
}

/// Threshold-only profile from normal adaptation samples.
pub fn build_threshold_profile(
    pump_id: &str,
    adapt_normals: &[&VibrationSample],
    policy: &SelectionPolicy,
) -> Result<PumpProfile> {
    policy.validate()?;
    let mean = compute_normal_mean(adapt_normals.iter().copied())?;
    let eps: Vec<f64> = adapt_normals.iter().map(|s| threshold_epsilon(s, &mean)).collect();
    let mut profile = PumpProfile::new(pump_id, mean, policy.clone());
    profile.threshold = Some(select_threshold_fpr(&eps, policy.target_fpr)?);
    profile.chosen_detector = Some(DetectorKind::Threshold);
    Ok(profile)
}

/// ECNN profile from normal adaptation samples, or `None` when no grid factor
/// reaches the target false positive rate.
pub fn build_ecnn_profile<T: Real>(
    model: &Model<T>,
    pump_id: &str,
    adapt_normals: &[&VibrationSample],
    policy: &SelectionPolicy,
) -> Result<Option<PumpProfile>> {
    policy.validate()?;
    let mean = compute_normal_mean(adapt_normals.iter().copied())?;
    Ok(select_factor_fpr(model, adapt_normals, &mean, policy)?.map(|f| {
        let mut profile = PumpProfile::new(pump_id, mean, policy.clone());
        profile.factor = Some(f);
        profile.chosen_detector = Some(DetectorKind::Ecnn);
        profile
    }))
}

/// ECNN when some factor reaches the target false positive rate on the
/// adaptation normals, the threshold detector otherwise.
pub fn build_combined<T: Real>(
    model: &Model<T>,
    pump_id: &str,
    adapt_normals: &[&VibrationSample],
    policy: &SelectionPolicy,
) -> Result<PumpProfile> {
    match build_ecnn_profile(model, pump_id, adapt_normals, policy)? {
        Some(profile) => Ok(profile),
        None => build_threshold_profile(pump_id, adapt_normals, policy),
    }
}
