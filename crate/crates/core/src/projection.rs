//! Euclidean projections onto the feasible fraction sets.

/// Projection onto `{q >= 0, sum q = total}` by the sort-and-threshold method.
pub fn project_simplex(y: &[f64], total: f64) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - total) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projection onto `{q >= 0, sum q <= 1}`.
pub fn project_capped_simplex(y: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|&x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        clipped
    } else {
        project_simplex(y, 1.0)
    }
}
