//! Vibration samples, per-pump datasets and the views the pipeline trains
//! and evaluates on.

mod io;
mod split;
mod synth;

use std::path::PathBuf;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset};
pub use split::{split_adaptation, split_fixed, split_leave_one_pump_out, AdaptationSplit};
pub use synth::{generate_synthetic, SyntheticSpec};

/// Points per axis in one vibration window.
pub const SAMPLE_LENGTH: usize = 800;

pub const NORMAL: u8 = 0;
pub const ABNORMAL: u8 = 1;

/// One 3-axis acceleration window with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationSample {
    pub pump_id: String,
    pub label: u8,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl VibrationSample {
    pub fn axes(&self) -> [&[f64]; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn is_normal(&self) -> bool {
        self.label == NORMAL
    }

    /// Checks axis lengths, finiteness and the label.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.label > 1 {
            return Err(format!("label must be 0 or 1, got {}", self.label));
        }
        for (name, axis) in ["x", "y", "z"].iter().zip(self.axes()) {
            if axis.len() != SAMPLE_LENGTH {
                return Err(format!(
                    "axis {name} has {} values, expected {SAMPLE_LENGTH}",
                    axis.len()
                ));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(format!("axis {name} has a non-finite value"));
            }
        }
        Ok(())
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic(SyntheticSpec),
    File(PathBuf),
    /// Built in memory, e.g. by filtering another dataset.
    Derived,
}

/// Samples grouped by pump, in stable insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpDataset {
    pumps: IndexMap<String, Vec<VibrationSample>>,
    pub provenance: Provenance,
}

impl Default for PumpDataset {
    fn default() -> Self {
        Self::new(Provenance::Derived)
    }
}

impl PumpDataset {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            pumps: IndexMap::new(),
            provenance,
        }
    }

    /// Appends a sample to its pump, creating the pump on first sight.
    pub fn push(&mut self, sample: VibrationSample) {
        self.pumps
            .entry(sample.pump_id.clone())
            .or_default()
            .push(sample);
    }

    pub fn pump_ids(&self) -> impl Iterator<Item = &str> {
        self.pumps.keys().map(String::as_str)
    }

    pub fn pumps(&self) -> impl Iterator<Item = (&str, &[VibrationSample])> {
        self.pumps.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn pump(&self, pump_id: &str) -> Option<&[VibrationSample]> {
        self.pumps.get(pump_id).map(Vec::as_slice)
    }

    pub fn pump_count(&self) -> usize {
        self.pumps.len()
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.pumps.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> impl Iterator<Item = &VibrationSample> {
        self.pumps.values().flatten()
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let abnormal = self.samples().filter(|s| s.label == ABNORMAL).count();
        (self.len() - abnormal, abnormal)
    }

    /// Whole dataset as a view.
    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            entries: self
                .pumps
                .values()
                .flat_map(|s| s.iter().enumerate())
                .collect(),
        }
    }

    /// Keeps only pumps with at least one normal and one abnormal sample.
    ///
    /// Returns the filtered dataset and the ids of the excluded pumps.
    pub fn retain_both_labels(&self) -> (PumpDataset, Vec<String>) {
        let mut kept = PumpDataset::new(self.provenance.clone());
        let mut excluded = Vec::new();
        for (id, samples) in &self.pumps {
            let normals = samples.iter().filter(|s| s.is_normal()).count();
            if normals > 0 && normals < samples.len() {
                kept.pumps.insert(id.clone(), samples.clone());
            } else {
                excluded.push(id.clone());
            }
        }
        (kept, excluded)
    }
}

/// Identifies a sample by pump and position within that pump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleId<'a> {
    pub pump_id: &'a str,
    pub index: usize,
}

/// Read-only selection of samples from one dataset.
#[derive(Debug, Clone, Default)]
pub struct DatasetView<'a> {
    entries: Vec<(usize, &'a VibrationSample)>,
}

impl<'a> DatasetView<'a> {
    pub(crate) fn from_entries(entries: Vec<(usize, &'a VibrationSample)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &'a VibrationSample> + '_ {
        self.entries.iter().map(|&(_, s)| s)
    }

    pub fn ids(&self) -> impl Iterator<Item = SampleId<'a>> + '_ {
        self.entries.iter().map(|&(index, s)| SampleId {
            pump_id: s.pump_id.as_str(),
            index,
        })
    }

    /// Distinct pump ids in order of first appearance.
    pub fn pump_ids(&self) -> Vec<&'a str> {
        let mut seen: IndexMap<&'a str, ()> = IndexMap::new();
        for &(_, s) in &self.entries {
            seen.entry(s.pump_id.as_str()).or_insert(());
        }
        seen.into_keys().collect()
    }

    /// Samples grouped per pump, in order of first appearance.
    pub fn by_pump(&self) -> IndexMap<&'a str, Vec<&'a VibrationSample>> {
        let mut out: IndexMap<&'a str, Vec<&'a VibrationSample>> = IndexMap::new();
        for &(_, s) in &self.entries {
            out.entry(s.pump_id.as_str()).or_default().push(s);
        }
        out
    }
}

/// Per-axis mean over every point of a pump's normal samples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalMean {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl NormalMean {
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Mean of each axis over all points of the normal samples; abnormal samples
/// are ignored.
pub fn compute_normal_mean<'a>(
    samples: impl IntoIterator<Item = &'a VibrationSample>,
) -> Result<NormalMean> {
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for s in samples.into_iter().filter(|s| s.is_normal()) {
        for (acc, axis) in sums.iter_mut().zip(s.axes()) {
            *acc += axis.iter().sum::<f64>();
        }
        count += s.x.len();
    }
    if count == 0 {
        return Err(Error::usage(
            "normal mean needs at least one normal sample",
        ));
    }
    let n = count as f64;
    let mean = NormalMean {
        x: sums[0] / n,
        y: sums[1] / n,
        z: sums[2] / n,
    };
    if !mean.is_finite() {
        return Err(Error::numeric("normal mean is not finite"));
    }
    Ok(mean)
}
