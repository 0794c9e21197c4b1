//! Pump-specific parameter search: FPR tracking over a descending grid,
//! the labeled-data optimum, and a single fixed value shared by all pumps.

use crate::data::{NormalMean, VibrationSample};
use crate::detectors::network::ecnn_labels;
use crate::detectors::threshold::{threshold_candidates, threshold_predict};
use crate::detectors::SelectionPolicy;
use crate::error::{Error, Result};
use crate::nn::{Model, Real};

fn correct_fraction(predictions: &[u8], labels: &[u8]) -> f64 {
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Walks `policy.grid` from the largest factor down and returns the first one
/// whose false positive rate on the adaptation normals is below the target.
pub fn select_factor_fpr<T: Real>(
    model: &Model<T>,
    adapt_normals: &[&VibrationSample],
    mean: &NormalMean,
    policy: &SelectionPolicy,
) -> Result<Option<f64>> {
    if adapt_normals.is_empty() {
        return Err(Error::usage("factor selection needs adaptation normals"));
    }
    if let Some(s) = adapt_normals.iter().find(|s| !s.is_normal()) {
        return Err(Error::usage(format!(
            "adaptation set of pump '{}' contains an abnormal sample",
            s.pump_id
        )));
    }
    for &factor in &policy.grid {
        let labels = ecnn_labels(model, adapt_normals, mean, factor)?;
        let fpr = labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64;
        if fpr < policy.target_fpr {
            return Ok(Some(factor));
        }
    }
    Ok(None)
}

fn better(acc: f64, param: f64, best: Option<(f64, f64)>) -> bool {
    match best {
        None => true,
        Some((p, a)) => acc > a || (acc == a && param > p),
    }
}

/// Grid value with the highest accuracy on labeled samples; ties go to the
/// larger value. Returns `(parameter, accuracy)`.
///
/// Needs both labels present, so it is only usable where labels are known.
pub fn select_param_optimal(
    grid: &[f64],
    labels: &[u8],
    mut predict: impl FnMut(f64) -> Result<Vec<u8>>,
) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::usage("parameter grid is empty"));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::usage(
            "optimal parameter selection needs both normal and abnormal samples",
        ));
    }
    let mut best = None;
    for &param in grid {
        let acc = correct_fraction(&predict(param)?, labels);
        if better(acc, param, best) {
            best = Some((param, acc));
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Grid value with the highest mean per-pump accuracy; ties go to the larger
/// value. `predict(pump, param)` labels the samples of pump `pump`.
pub fn select_param_fixed(
    grid: &[f64],
    pump_labels: &[Vec<u8>],
    mut predict: impl FnMut(usize, f64) -> Result<Vec<u8>>,
) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::usage("parameter grid is empty"));
    }
    if pump_labels.is_empty() || pump_labels.iter().any(Vec::is_empty) {
        return Err(Error::usage("fixed parameter selection needs labeled samples for every pump"));
    }
    let mut best = None;
    for &param in grid {
        let mut total = 0.0;
        for (p, labels) in pump_labels.iter().enumerate() {
            total += correct_fraction(&predict(p, param)?, labels);
        }
        let acc = total / pump_labels.len() as f64;
        if better(acc, param, best) {
            best = Some((param, acc));
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Optimal threshold over every distinct ε of the labeled set plus the guard.
pub fn select_threshold_optimal(epsilons: &[f64], labels: &[u8]) -> Result<f64> {
    let grid = threshold_candidates(epsilons);
    select_param_optimal(&grid, labels, |t| {
        Ok(epsilons.iter().map(|&e| threshold_predict(e, t)).collect())
    })
    .map(|(t, _)| t)
}

/// One threshold for all pumps, searched over every pump's ε values.
pub fn select_threshold_fixed(per_pump: &[(Vec<f64>, Vec<u8>)]) -> Result<f64> {
    let all: Vec<f64> = per_pump.iter().flat_map(|(e, _)| e.iter().copied()).collect();
    let grid = threshold_candidates(&all);
    let sorted: Vec<Vec<(f64, u8)>> = per_pump
        .iter()
        .map(|(e, l)| {
            let mut v: Vec<(f64, u8)> = e.iter().copied().zip(l.iter().copied()).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v
        })
        .collect();
    // Accuracy at T from prefix counts: normals below T plus abnormals at or above T.
    let prefix_normals: Vec<Vec<usize>> = sorted
        .iter()
        .map(|v| {
            let mut acc = vec![0usize; v.len() + 1];
            for (i, &(_, l)) in v.iter().enumerate() {
                acc[i + 1] = acc[i] + usize::from(l == 0);
            }
            acc
        })
        .collect();
    let mut best = None;
    for &t in &grid {
        let mut total = 0.0;
        for (v, prefix) in sorted.iter().zip(&prefix_normals) {
            let below = v.partition_point(|&(e, _)| e < t);
            let abnormal_total = v.len() - prefix[v.len()];
            let abnormal_below = below - prefix[below];
            let correct = prefix[below] + (abnormal_total - abnormal_below);
            total += correct as f64 / v.len() as f64;
        }
        let acc = total / sorted.len() as f64;
        if better(acc, t, best) {
            best = Some((t, acc));
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::usage("fixed threshold selection needs labeled samples"))
}
