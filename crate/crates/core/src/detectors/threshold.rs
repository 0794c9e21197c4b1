use crate::data::{NormalMean, VibrationSample};
use crate::error::{Error, Result};

/// Relative margin of the guard candidate above the largest value.
pub const GUARD_MARGIN: f64 = 1e-6;

/// Mean squared deviation of all `3 × 800` points from the per-axis normal
/// mean.
pub fn threshold_epsilon(sample: &VibrationSample, mean: &NormalMean) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (axis, mu) in sample.axes().into_iter().zip(mean.as_array()) {
        total += axis.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
        count += axis.len();
    }
    total / count as f64
}

/// Normal below the threshold, abnormal at or above it.
pub fn threshold_predict(epsilon: f64, threshold: f64) -> u8 {
    u8::from(epsilon >= threshold)
}

/// Sorted distinct values plus one guard just above the maximum, which
/// classifies every given value as normal.
pub fn threshold_candidates(values: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if let Some(&max) = sorted.last() {
        let guard = if max > 0.0 {
            max * (1.0 + GUARD_MARGIN)
        } else {
            f64::MIN_POSITIVE
        };
        sorted.push(guard);
    }
    sorted
}

/// Smallest candidate threshold whose false positive rate over the
/// adaptation values is strictly below `target_fpr`.
pub fn select_threshold_fpr(adapt_epsilons: &[f64], target_fpr: f64) -> Result<f64> {
    if adapt_epsilons.is_empty() {
        return Err(Error::usage("threshold selection needs at least one adaptation value"));
    }
    let candidates = threshold_candidates(adapt_epsilons);
    let mut sorted = adapt_epsilons.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    for &t in &candidates {
        let below = sorted.partition_point(|&e| e < t);
        let fpr = (sorted.len() - below) as f64 / n;
        if fpr < target_fpr {
            return Ok(t);
        }
    }
    unreachable!("the guard candidate has zero false positives")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::constant_sample;

    const ORIGIN: NormalMean = NormalMean { x: 0.0, y: 0.0, z: 0.0 };

    #[test]
    fn epsilon_examples() {
        let mu = NormalMean { x: 1.0, y: -2.0, z: 0.5 };
        assert_eq!(threshold_epsilon(&constant_sample("p", 0, 1.0, -2.0, 0.5), &mu), 0.0);
        assert_eq!(threshold_epsilon(&constant_sample("p", 0, 2.0, -1.0, 1.5), &mu), 1.0);
        let e = threshold_epsilon(&constant_sample("p", 0, 2.0, 0.0, 0.0), &ORIGIN);
        assert!((e - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn predict_boundary() {
        assert_eq!(threshold_predict(0.0, 1.0), 0);
        assert_eq!(threshold_predict(1.0, 1.0), 1);
        assert_eq!(threshold_predict(2.0, 1.0), 1);
    }

    #[test]
    fn fpr_selection_examples() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(select_threshold_fpr(&values, 0.10).unwrap(), 10.0 * (1.0 + 1e-6));
        assert_eq!(select_threshold_fpr(&[5.0], 0.10).unwrap(), 5.0 * (1.0 + 1e-6));
        // target 0.25 over ten values allows two false positives: T = 9
        assert_eq!(select_threshold_fpr(&values, 0.25).unwrap(), 9.0);
        assert!(matches!(select_threshold_fpr(&[], 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn all_zero_values_get_positive_guard() {
        let t = select_threshold_fpr(&[0.0, 0.0], 0.1).unwrap();
        assert!(t > 0.0);
        assert_eq!(threshold_predict(0.0, t), 0);
    }
}
