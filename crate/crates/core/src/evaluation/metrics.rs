use log::warn;

use crate::error::{Error, Result};

fn check_lengths(predictions: &[u8], labels: &[u8]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::usage("metrics need at least one sample"));
    }
    Ok(())
}

/// Fraction of predictions equal to their label.
pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(predictions, labels)?;
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of normal samples predicted abnormal.
pub fn fpr(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(predictions, labels)?;
    let negatives = labels.iter().filter(|&&l| l == 0).count();
    if negatives == 0 {
        return Err(Error::UndefinedMetric(
            "false positive rate needs at least one normal sample".into(),
        ));
    }
    let false_positives = predictions
        .iter()
        .zip(labels)
        .filter(|&(&p, &l)| l == 0 && p == 1)
        .count();
    Ok(false_positives as f64 / negatives as f64)
}

/// Whether at least one abnormal sample was caught; `None` without abnormal
/// samples.
pub fn detected(predictions: &[u8], labels: &[u8]) -> Option<bool> {
    if !labels.contains(&1) {
        return None;
    }
    Some(predictions.iter().zip(labels).any(|(&p, &l)| p == 1 && l == 1))
}

/// Fraction of pumps with at least one detected abnormal sample.
///
/// Pumps without abnormal samples are skipped with a warning.
pub fn tpdr<P: AsRef<[u8]>, L: AsRef<[u8]>>(per_pump: &[(P, L)]) -> Result<f64> {
    if per_pump.is_empty() {
        return Err(Error::usage("TPDR needs at least one pump"));
    }
    let mut pumps = 0usize;
    let mut hits = 0usize;
    for (i, (p, l)) in per_pump.iter().enumerate() {
        check_lengths(p.as_ref(), l.as_ref())?;
        match detected(p.as_ref(), l.as_ref()) {
            Some(hit) => {
                pumps += 1;
                hits += usize::from(hit);
            }
            None => warn!("pump #{i} has no abnormal samples; excluded from TPDR"),
        }
    }
    if pumps == 0 {
        return Err(Error::UndefinedMetric(
            "TPDR needs a pump with at least one abnormal sample".into(),
        ));
    }
    Ok(hits as f64 / pumps as f64)
}
