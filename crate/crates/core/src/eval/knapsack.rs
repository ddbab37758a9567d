//! Key-shot selection as an exact 0/1 knapsack over segments.
//!
//! Segment value = mean frame score, segment weight = frame count, capacity
//! = `floor(budget * T)` frames. The DP maximizes total value exactly; ties
//! resolve to not taking the item, so the selection is deterministic.

use super::{SegmentList, Summary};
use crate::error::{Error, Result};

/// Select whole segments maximizing total mean score under the frame budget.
pub fn knapsack_select(
    frame_scores: &[f64],
    segments: &SegmentList,
    budget: f64,
) -> Result<Summary> {
    if !(0.0..=1.0).contains(&budget) || budget == 0.0 {
        return Err(Error::Input(format!("budget {} outside (0, 1]", budget)));
    }
    if frame_scores.len() != segments.frames() {
        return Err(Error::shape(
            "knapsack_select",
            format!(
                "{} scores vs {} frames",
                frame_scores.len(),
                segments.frames()
            ),
        ));
    }

    let t = frame_scores.len();
    let capacity = (budget * t as f64).floor() as usize;
    let items: Vec<(usize, usize, f64)> = segments
        .segments()
        .map(|(start, end)| {
            let len = end - start;
            let value = frame_scores[start..end].iter().sum::<f64>() / len as f64;
            (start, len, value)
        })
        .collect();

    // dp[i][w]: best value using the first i segments within weight w.
    let n = items.len();
    let mut dp = vec![vec![0.0f64; capacity + 1]; n + 1];
    let mut keep = vec![vec![false; capacity + 1]; n + 1];
    for i in 1..=n {
        let (_, len, value) = items[i - 1];
        for w in 0..=capacity {
            dp[i][w] = dp[i - 1][w];
            if len <= w {
                let with = dp[i - 1][w - len] + value;
                if with > dp[i][w] {
                    dp[i][w] = with;
                    keep[i][w] = true;
                }
            }
        }
    }

    let mut selected = vec![false; t];
    let mut w = capacity;
    for i in (1..=n).rev() {
        if keep[i][w] {
            let (start, len, _) = items[i - 1];
            for flag in &mut selected[start..start + len] {
                *flag = true;
            }
            w -= len;
        }
    }

    Summary::new(selected, budget, segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;
    use proptest::prelude::*;

    fn uniform_segments(lens: &[usize]) -> SegmentList {
        let mut boundaries = vec![0];
        let mut acc = 0;
        for l in lens {
            acc += l;
            boundaries.push(acc);
        }
        SegmentList::new(boundaries, acc).unwrap()
    }

    #[test]
    fn everything_selected_when_it_fits() {
        let segs = uniform_segments(&[2, 3, 1]);
        let scores = vec![0.5; 6];
        let summary = knapsack_select(&scores, &segs, 1.0).unwrap();
        assert!(summary.selected().iter().all(|&s| s));
    }

    #[test]
    fn zero_capacity_gives_empty_summary() {
        // floor(0.15 * 6) = 0 frames.
        let segs = uniform_segments(&[3, 3]);
        let scores = vec![0.9; 6];
        let summary = knapsack_select(&scores, &segs, 0.15).unwrap();
        assert_eq!(summary.frame_count(), 0);
    }

    #[test]
    fn invalid_budget_is_rejected() {
        let segs = uniform_segments(&[3, 3]);
        assert!(knapsack_select(&[0.1; 6], &segs, 0.0).is_err());
        assert!(knapsack_select(&[0.1; 6], &segs, 1.5).is_err());
    }

    /// Exhaustive best subset, summing values in ascending segment order so
    /// partial sums round exactly like the DP accumulation.
    fn exhaustive_best(scores: &[f64], segs: &SegmentList, capacity: usize) -> (f64, Vec<usize>) {
        let items: Vec<(usize, f64)> = segs
            .segments()
            .map(|(s, e)| (e - s, scores[s..e].iter().sum::<f64>() / (e - s) as f64))
            .collect();
        let n = items.len();
        let mut best_value = 0.0;
        let mut best_set = Vec::new();
        for mask in 0u32..(1 << n) {
            let mut weight = 0;
            let mut value = 0.0;
            let mut set = Vec::new();
            for (i, item) in items.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    weight += item.0;
                    value += item.1;
                    set.push(i);
                }
            }
            if weight <= capacity && value > best_value {
                best_value = value;
                best_set = set;
            }
        }
        (best_value, best_set)
    }

    #[test]
    fn matches_exhaustive_subset_search() {
        let mut rng = SeededRng::new(7);
        for trial in 0..100 {
            let n_segs = 2 + rng.uniform_usize(0, 9);
            let lens: Vec<usize> = (0..n_segs).map(|_| 1 + rng.uniform_usize(0, 5)).collect();
            let segs = uniform_segments(&lens);
            let t = segs.frames();
            let scores: Vec<f64> = (0..t).map(|_| rng.uniform(0.0, 1.0)).collect();
            let budget = 0.2 + rng.uniform(0.0, 0.6);
            let capacity = (budget * t as f64).floor() as usize;

            let summary = knapsack_select(&scores, &segs, budget).unwrap();
            let dp_value: f64 = segs
                .segments()
                .enumerate()
                .filter(|(_, (s, _))| summary.selected()[*s])
                .map(|(_, (s, e))| scores[s..e].iter().sum::<f64>() / (e - s) as f64)
                .sum();
            let (brute_value, brute_set) = exhaustive_best(&scores, &segs, capacity);
            let dp_set: Vec<usize> = segs
                .segments()
                .enumerate()
                .filter(|(_, (s, _))| summary.selected()[*s])
                .map(|(i, _)| i)
                .collect();
            assert_eq!(dp_set, brute_set, "trial {}", trial);
            // Exact f64 equality: both sides accumulate in ascending
            // segment order. (== rather than to_bits so that the empty
            // selection's -0.0 from Sum<f64> compares equal to 0.0.)
            assert!(
                dp_value == brute_value,
                "trial {}: {} vs {}",
                trial,
                dp_value,
                brute_value
            );
        }
    }

    proptest! {
        #[test]
        fn budget_is_never_exceeded(seed in 0u64..300, budget in 0.05f64..1.0) {
            let mut rng = SeededRng::new(seed);
            let n_segs = 1 + rng.uniform_usize(0, 8);
            let lens: Vec<usize> = (0..n_segs).map(|_| 1 + rng.uniform_usize(0, 6)).collect();
            let segs = uniform_segments(&lens);
            let t = segs.frames();
            let scores: Vec<f64> = (0..t).map(|_| rng.uniform(0.0, 1.0)).collect();
            let summary = knapsack_select(&scores, &segs, budget).unwrap();
            prop_assert!(summary.frame_count() <= (budget * t as f64).floor() as usize);
        }
    }
}
