use crate::evaluation::EvalRecord;

/// Indices of the points not dominated in (lower cost, higher accuracy),
/// sorted by cost. Of identical points only the first is kept.
pub fn pareto_indices(points: &[(u64, f64)]) -> Vec<usize> {
    let dominated = |i: usize| {
        let (ci, ai) = points[i];
        points.iter().enumerate().any(|(j, &(cj, aj))| {
            let dominates = cj <= ci && aj >= ai && (cj < ci || aj > ai);
            let earlier_duplicate = j < i && cj == ci && aj == ai;
            dominates || earlier_duplicate
        })
    };
    let mut keep: Vec<usize> = (0..points.len()).filter(|&i| !dominated(i)).collect();
    keep.sort_by_key(|&i| points[i].0);
    keep
}

/// Records on the MAC-count versus accuracy Pareto front.
pub fn pareto_front(records: &[EvalRecord]) -> Vec<EvalRecord> {
    let points: Vec<(u64, f64)> = records.iter().map(|r| (r.mac_count, r.accuracy)).collect();
    pareto_indices(&points)
        .into_iter()
        .map(|i| records[i].clone())
        .collect()
}
