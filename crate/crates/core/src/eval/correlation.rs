//! Rank-order correlation coefficients.
//!
//! Kendall's tau-b via the sort-and-merge formulation: sort by the first
//! vector (ties broken by the second), count discordant pairs as merge-sort
//! inversions of the second vector, and correct for ties with the usual
//! tie-pair counts. Spearman's rho is the Pearson correlation of average
//! ranks (tied values share the mean of their positions). Both are
//! undefined when either input is entirely tied.

use crate::error::{Error, Result};

fn validate_pair(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(
            op,
            format!("{} vs {} entries", a.len(), b.len()),
        ));
    }
    if a.len() < 2 {
        return Err(Error::Input(format!("{} needs at least 2 entries", op)));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{}: non-finite input", op)));
    }
    Ok(())
}

/// Tied-pair count: sum over runs of equal values of `c * (c - 1) / 2`.
fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Inversions (strictly decreasing pairs) counted by merge sort.
fn count_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mut buf = values.to_vec();
    merge_count(values, &mut buf, 0, n)
}

fn merge_count(values: &mut [f64], buf: &mut [f64], lo: usize, hi: usize) -> u64 {
    if hi - lo < 2 {
        return 0;
    }
    let mid = (lo + hi) / 2;
    let mut inversions = merge_count(values, buf, lo, mid) + merge_count(values, buf, mid, hi);
    let (mut i, mut j) = (lo, mid);
    for slot in buf.iter_mut().take(hi).skip(lo) {
        // Take from the right only when strictly smaller: equal values are
        // not discordant.
        if i < mid && (j >= hi || values[i] <= values[j]) {
            *slot = values[i];
            i += 1;
        } else {
            inversions += (mid - i) as u64;
            *slot = values[j];
            j += 1;
        }
    }
    values[lo..hi].copy_from_slice(&buf[lo..hi]);
    inversions
}

/// Tie-aware Kendall tau-b between two equally long score vectors.
pub fn kendall_tau(pred: &[f64], reference: &[f64]) -> Result<f64> {
    validate_pair("kendall_tau", pred, reference)?;
    let n = pred.len() as u64;
    let total_pairs = n * (n - 1) / 2;

    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| {
        pred[a]
            .total_cmp(&pred[b])
            .then_with(|| reference[a].total_cmp(&reference[b]))
    });

    let x_sorted: Vec<f64> = order.iter().map(|&i| pred[i]).collect();
    let ties_x = tie_pairs(&x_sorted);

    // Joint ties: runs of equal (x, y) pairs in the sorted order.
    let mut ties_xy = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if pred[w[0]] == pred[w[1]] && reference[w[0]] == reference[w[1]] {
            run += 1;
        } else {
            ties_xy += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties_xy += run * (run - 1) / 2;

    let mut y_in_x_order: Vec<f64> = order.iter().map(|&i| reference[i]).collect();
    let discordant = count_inversions(&mut y_in_x_order);

    let mut y_sorted: Vec<f64> = reference.to_vec();
    y_sorted.sort_by(f64::total_cmp);
    let ties_y = tie_pairs(&y_sorted);

    let denom_x = total_pairs - ties_x;
    let denom_y = total_pairs - ties_y;
    if denom_x == 0 || denom_y == 0 {
        return Err(Error::UndefinedCoefficient(
            "kendall_tau: an input is entirely tied".into(),
        ));
    }

    // total - ties_x - ties_y + ties_xy = concordant + discordant.
    // Add before subtracting so the unsigned arithmetic cannot wrap.
    let con_plus_dis = ((total_pairs + ties_xy) - ties_x - ties_y) as f64;
    let con_minus_dis = con_plus_dis - 2.0 * discordant as f64;
    Ok(con_minus_dis / ((denom_x as f64) * (denom_y as f64)).sqrt())
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average-ranked values.
pub fn spearman_rho(pred: &[f64], reference: &[f64]) -> Result<f64> {
    validate_pair("spearman_rho", pred, reference)?;
    let rx = average_ranks(pred);
    let ry = average_ranks(reference);
    let n = rx.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / n;
    let mean_y = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::UndefinedCoefficient(
            "spearman_rho: an input has zero rank variance".into(),
        ));
    }
    Ok(cov / (var_x * var_y).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;
    use proptest::prelude::*;

    /// O(n^2) pair-counting oracle for tau-b, straight from the definition.
    fn tau_pair_counting(x: &[f64], y: &[f64]) -> Option<f64> {
        let n = x.len();
        let (mut con, mut dis) = (0i64, 0i64);
        for i in 0..n {
            for j in i + 1..n {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 || dy == 0.0 {
                    continue;
                } else if dx * dy > 0.0 {
                    con += 1;
                } else {
                    dis += 1;
                }
            }
        }
        let total = (n * (n - 1) / 2) as u64;
        // Full per-axis tie-pair counts for the denominator.
        let mut xs = x.to_vec();
        xs.sort_by(f64::total_cmp);
        let mut ys = y.to_vec();
        ys.sort_by(f64::total_cmp);
        let nx = total - tie_pairs(&xs);
        let ny = total - tie_pairs(&ys);
        if nx == 0 || ny == 0 {
            return None;
        }
        Some((con - dis) as f64 / ((nx as f64) * (ny as f64)).sqrt())
    }

    /// Independent rank computation: count-smaller plus half the ties.
    fn ranks_by_counting(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let less = values.iter().filter(|&&o| o < v).count() as f64;
                let equal = values.iter().filter(|&&o| o == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn identical_rankings_give_one() {
        let x = vec![0.1, 0.4, 0.2, 0.9, 0.6];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman_rho(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn reversed_rankings_give_minus_one() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&x, &y).unwrap(), -1.0);
        assert_eq!(spearman_rho(&x, &y).unwrap(), -1.0);
    }

    #[test]
    fn all_tied_input_is_undefined() {
        let x = vec![0.5, 0.5, 0.5];
        let y = vec![0.1, 0.2, 0.3];
        assert!(matches!(
            kendall_tau(&x, &y).unwrap_err(),
            Error::UndefinedCoefficient(_)
        ));
        assert!(matches!(
            spearman_rho(&x, &y).unwrap_err(),
            Error::UndefinedCoefficient(_)
        ));
        assert!(kendall_tau(&y, &x).is_err());
    }

    #[test]
    fn tau_matches_pair_counting_oracle_with_ties() {
        let mut rng = SeededRng::new(1);
        for trial in 0..60 {
            let n = 5 + rng.uniform_usize(0, 196);
            // Coarse grid forces plenty of ties.
            let x: Vec<f64> = (0..n)
                .map(|_| (rng.uniform_usize(0, 9) as f64) / 8.0)
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|_| (rng.uniform_usize(0, 9) as f64) / 8.0)
                .collect();
            match (kendall_tau(&x, &y), tau_pair_counting(&x, &y)) {
                (Ok(fast), Some(brute)) => {
                    assert!(
                        (fast - brute).abs() < 1e-12,
                        "trial {}: {} vs {}",
                        trial,
                        fast,
                        brute
                    )
                }
                (Err(Error::UndefinedCoefficient(_)), None) => {}
                (a, b) => panic!("trial {}: mismatch {:?} vs {:?}", trial, a, b),
            }
        }
    }

    #[test]
    fn rho_matches_rank_then_pearson_oracle() {
        let mut rng = SeededRng::new(2);
        for _ in 0..60 {
            let n = 5 + rng.uniform_usize(0, 196);
            let x: Vec<f64> = (0..n)
                .map(|_| (rng.uniform_usize(0, 12) as f64) / 11.0)
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            if let Ok(fast) = spearman_rho(&x, &y) {
                let oracle = pearson(&ranks_by_counting(&x), &ranks_by_counting(&y));
                assert!((fast - oracle).abs() < 1e-12, "{} vs {}", fast, oracle);
            }
        }
    }

    #[test]
    fn average_ranks_handle_ties() {
        let ranks = average_ranks(&[0.3, 0.1, 0.3, 0.7]);
        assert_eq!(ranks, vec![2.5, 1.0, 2.5, 4.0]);
    }

    proptest! {
        #[test]
        fn invariant_under_strictly_increasing_transforms(seed in 0u64..200) {
            let mut rng = SeededRng::new(seed);
            let n = 5 + rng.uniform_usize(0, 30);
            let x: Vec<f64> = (0..n).map(|_| (rng.uniform_usize(0, 7) as f64) / 6.0).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            // exp is strictly increasing; x^3 is strictly increasing on all reals.
            let x_t: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let y_t: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            match (kendall_tau(&x, &y), kendall_tau(&x_t, &y_t)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                (a, b) => return Err(TestCaseError::fail(format!("{:?} vs {:?}", a, b))),
            }
            match (spearman_rho(&x, &y), spearman_rho(&x_t, &y_t)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                (a, b) => return Err(TestCaseError::fail(format!("{:?} vs {:?}", a, b))),
            }
        }
    }
}
