//! Deterministic synthetic stand-in for real pump vibration recordings.
//!
//! Every pump gets its own operating signature:
//!
//! * base frequency `f ∈ [5, 50]` cycles per window,
//! * base amplitude `a ∈ [0.5, 2]`,
//! * per-axis phase `φ_d ∈ [0, 2π)` and DC offset `o_d ∈ [-1, 1]`.
//!
//! A normal window is `a·sin(2π f t / 800 + φ_d) + o_d + N(0, (noise·a)²)`.
//! An abnormal window draws a multiplier `m ∈ [0.75·severity, 1.25·severity]`
//! and becomes
//!
//! ```text
//! m·a·sin(2π f t / 800 + φ_d) + 0.4·m·a·sin(4π f t / 800 + 2φ_d) + impulses + o_d + noise
//! ```
//!
//! where the impulse train has a random period in `[40, 120]` points, random
//! start and sign per impulse, and height `1.5·m·a`.
//!
//! Each pump draws from its own PRNG stream `(seed, pump index)`. A pump's
//! normal windows come first, followed by its abnormal windows, mimicking
//! a pump that starts healthy.

use std::f64::consts::TAU;

use crate::data::{PumpDataset, Provenance, VibrationSample, ABNORMAL, NORMAL, SAMPLE_LENGTH};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_pumps: usize,
    pub samples_per_pump: usize,
    pub abnormal_fraction: f64,
    /// Midpoint of the abnormal amplitude multiplier range.
    pub severity: f64,
    /// Noise standard deviation relative to the pump's base amplitude.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 20 pumps × 200 windows, one third normal.
    fn default() -> Self {
        Self {
            n_pumps: 20,
            samples_per_pump: 200,
            abnormal_fraction: 2.0 / 3.0,
            severity: 2.5,
            noise_level: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pumps == 0 || self.samples_per_pump == 0 {
            return Err(Error::usage("pump and sample counts must be positive"));
        }
        if !(0.0..=1.0).contains(&self.abnormal_fraction) {
            return Err(Error::usage(format!(
                "abnormal fraction must lie in [0, 1], got {}",
                self.abnormal_fraction
            )));
        }
        if !(self.severity > 1.0 && self.severity.is_finite()) {
            return Err(Error::usage(format!(
                "severity must be greater than 1, got {}",
                self.severity
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::usage(format!(
                "noise level must be non-negative, got {}",
                self.noise_level
            )));
        }
        Ok(())
    }

    pub fn abnormal_per_pump(&self) -> usize {
        (self.abnormal_fraction * self.samples_per_pump as f64).round() as usize
    }
}

struct PumpSignature {
    frequency: f64,
    amplitude: f64,
    phase: [f64; 3],
    offset: [f64; 3],
}

impl PumpSignature {
    fn draw(rng: &mut Rng) -> Self {
        let frequency = rng.uniform_in(5.0, 50.0);
        let amplitude = rng.uniform_in(0.5, 2.0);
        let phase = [rng.uniform_in(0.0, TAU), rng.uniform_in(0.0, TAU), rng.uniform_in(0.0, TAU)];
        let offset = [
            rng.uniform_in(-1.0, 1.0),
            rng.uniform_in(-1.0, 1.0),
            rng.uniform_in(-1.0, 1.0),
        ];
        Self {
            frequency,
            amplitude,
            phase,
            offset,
        }
    }
}

fn window(sig: &PumpSignature, spec: &SyntheticSpec, abnormal: bool, rng: &mut Rng) -> [Vec<f64>; 3] {
    let mult = if abnormal {
        rng.uniform_in(0.75 * spec.severity, 1.25 * spec.severity)
    } else {
        1.0
    };
    let amp = sig.amplitude * mult;
    let sigma = spec.noise_level * sig.amplitude;
    let omega = TAU * sig.frequency / SAMPLE_LENGTH as f64;

    let mut axes: [Vec<f64>; 3] = Default::default();
    for (d, axis) in axes.iter_mut().enumerate() {
        let phase = sig.phase[d];
        *axis = (0..SAMPLE_LENGTH)
            .map(|t| {
                let t = t as f64;
                let mut v = amp * (omega * t + phase).sin();
                if abnormal {
                    v += 0.4 * amp * (2.0 * omega * t + 2.0 * phase).sin();
                }
                v + sig.offset[d]
            })
            .collect();
        if abnormal {
            let period = 40 + rng.below(81) as usize;
            let mut t = rng.below(period as u64) as usize;
            while t < SAMPLE_LENGTH {
                let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
                axis[t] += sign * 1.5 * amp;
                t += period;
            }
        }
        for v in axis.iter_mut() {
            *v += sigma * rng.normal();
        }
    }
    axes
}

/// Builds the dataset described by `spec`; identical specs give identical data.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PumpDataset> {
    spec.validate()?;
    let mut dataset = PumpDataset::new(Provenance::Synthetic(*spec));
    let abnormal = spec.abnormal_per_pump();
    let normal = spec.samples_per_pump - abnormal;
    let width = (spec.n_pumps - 1).to_string().len().max(3);
    for p in 0..spec.n_pumps {
        let mut rng = Rng::stream(spec.seed, p as u64);
        let sig = PumpSignature::draw(&mut rng);
        let pump_id = format!("pump-{p:0width$}");
        for i in 0..spec.samples_per_pump {
            let is_abnormal = i >= normal;
            let [x, y, z] = window(&sig, spec, is_abnormal, &mut rng);
            dataset.push(VibrationSample {
                pump_id: pump_id.clone(),
                label: if is_abnormal { ABNORMAL } else { NORMAL },
                x,
                y,
                z,
            });
        }
    }
    Ok(dataset)
}
