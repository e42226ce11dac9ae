//! Small statistical helpers used by the Monte Carlo harness and its tests.

/// Wilson score interval for a binomial proportion at the given z quantile.
///
/// Always lies within `[0, 1]` and contains the point estimate `s / n`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    assert!(successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // containment of p is exact in real arithmetic; the min/max guards the
    // last-ulp rounding at p ∈ {0, 1}
    (
        (center - half).min(p).max(0.0),
        (center + half).max(p).min(1.0),
    )
}

/// z quantile for the 95% Wilson intervals reported in CSV output.
pub const WILSON_Z95: f64 = 1.959963984540054;

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("non-finite rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ties share the average of the ranks they span (1-based)
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns `None` when either input is constant (correlation undefined).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    assert!(values.len() >= 2);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate() {
        for (s, n) in [(0u64, 10u64), (10, 10), (3, 10), (812, 1000)] {
            let (lo, hi) = wilson_interval(s, n, WILSON_Z95);
            let p = s as f64 / n as f64;
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            assert!(lo <= p && p <= hi, "({lo}, {hi}) should contain {p}");
        }
    }

    #[test]
    fn spearman_monotone_is_unit() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let inc = [2.0, 4.0, 8.0, 16.0, 32.0];
        let dec = [5.0, 4.0, 3.0, 1.0, 0.5];
        assert_eq!(spearman(&x, &inc), Some(1.0));
        assert_eq!(spearman(&x, &dec), Some(-1.0));
    }

    #[test]
    fn spearman_handles_ties() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let rho = spearman(&x, &y).unwrap();
        assert!(rho > 0.8 && rho < 1.0);
        assert_eq!(spearman(&x, &[1.0; 4]), None);
    }
}
