use log::warn;

use crate::data::{DatasetView, PumpDataset, VibrationSample, ABNORMAL, NORMAL};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Holds out every sample of `pump_id`; the rest becomes the training view.
pub fn split_leave_one_pump_out<'a>(
    dataset: &'a PumpDataset,
    pump_id: &str,
) -> Result<(DatasetView<'a>, DatasetView<'a>)> {
    let test = dataset
        .pump(pump_id)
        .ok_or_else(|| Error::usage(format!("unknown pump '{pump_id}'")))?;
    let train = dataset
        .pumps()
        .filter(|(id, _)| *id != pump_id)
        .flat_map(|(_, s)| s.iter().enumerate())
        .collect();
    Ok((
        DatasetView::from_entries(train),
        DatasetView::from_entries(test.iter().enumerate().collect()),
    ))
}

/// Per-pump, per-class stratified split.
///
/// Each label class of each pump sends `round(test_ratio · n)` of its `n`
/// samples to test, clamped to `[1, n − 1]`; a class with fewer than two
/// samples stays wholly in train. Class members are chosen by a shuffle
/// drawn from stream `(seed, pump index)`. Both views keep stored order.
pub fn split_fixed<'a>(
    dataset: &'a PumpDataset,
    test_ratio: f64,
    seed: u64,
) -> Result<(DatasetView<'a>, DatasetView<'a>)> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::usage(format!(
            "test ratio must lie in (0, 1), got {test_ratio}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (p, (pump_id, samples)) in dataset.pumps().enumerate() {
        let mut rng = Rng::stream(seed, p as u64);
        let mut in_test = vec![false; samples.len()];
        for label in [NORMAL, ABNORMAL] {
            let mut members: Vec<usize> = (0..samples.len())
                .filter(|&i| samples[i].label == label)
                .collect();
            let n = members.len();
            if n < 2 {
                if n == 1 {
                    warn!("pump {pump_id}: only one sample with label {label}; kept in train");
                }
                continue;
            }
            let n_test = ((test_ratio * n as f64).round() as usize).clamp(1, n - 1);
            rng.shuffle(&mut members);
            for &i in &members[..n_test] {
                in_test[i] = true;
            }
        }
        for (i, s) in samples.iter().enumerate() {
            if in_test[i] {
                test.push((i, s));
            } else {
                train.push((i, s));
            }
        }
    }
    Ok((DatasetView::from_entries(train), DatasetView::from_entries(test)))
}

/// Adaptation normals and the remaining evaluation samples of one pump.
#[derive(Debug, Clone)]
pub struct AdaptationSplit<'a> {
    pub adapt_normals: Vec<&'a VibrationSample>,
    pub eval_set: Vec<&'a VibrationSample>,
}

/// Takes the first `⌈adapt_fraction · #normals⌉` normal samples in stored
/// order for adaptation; everything else is for evaluation.
pub fn split_adaptation<'a>(
    samples: impl IntoIterator<Item = &'a VibrationSample>,
    adapt_fraction: f64,
) -> Result<AdaptationSplit<'a>> {
    if !(adapt_fraction > 0.0 && adapt_fraction <= 1.0) {
        return Err(Error::usage(format!(
            "adapt fraction must lie in (0, 1], got {adapt_fraction}"
        )));
    }
    let samples: Vec<&VibrationSample> = samples.into_iter().collect();
    let normals = samples.iter().filter(|s| s.is_normal()).count();
    if normals < 2 {
        return Err(Error::usage(format!(
            "adaptation needs at least 2 normal samples, found {normals}"
        )));
    }
    let n_adapt = (adapt_fraction * normals as f64).ceil() as usize;
    let mut split = AdaptationSplit {
        adapt_normals: Vec::with_capacity(n_adapt),
        eval_set: Vec::with_capacity(samples.len() - n_adapt),
    };
    for s in samples {
        if s.is_normal() && split.adapt_normals.len() < n_adapt {
            split.adapt_normals.push(s);
        } else {
            split.eval_set.push(s);
        }
    }
    Ok(split)
}
