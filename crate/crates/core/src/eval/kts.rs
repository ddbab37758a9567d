//! Kernel temporal segmentation.
//!
//! Change-point detection by dynamic programming over within-segment
//! scatter under a linear (dot-product) kernel. For a segment `[a, b)` the
//! scatter is `sum_i k(x_i, x_i) - (1/(b-a)) * sum_{i,j} k(x_i, x_j)`;
//! both terms come from prefix sums over the Gram matrix, so each segment
//! cost is O(1) after an O(T^2) precomputation. The segment count is chosen
//! by the penalized cost `C_m + penalty * m * (log(T/m) + 1)`.

use super::SegmentList;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_KTS_PENALTY: f64 = 1.0;

/// Default cap on the segment count: one segment per 15 frames, at least one.
pub fn default_max_segments(frames: usize) -> usize {
    frames.div_ceil(15).max(1)
}

/// Prefix-sum tables over the Gram matrix of the features.
struct ScatterTable {
    /// box[i][j] = sum of gram entries in rows < i, cols < j.
    boxsum: Vec<Vec<f64>>,
    /// diag[i] = sum of gram diagonal entries < i.
    diagsum: Vec<f64>,
}

impl ScatterTable {
    fn build(features: &Matrix) -> Result<ScatterTable> {
        let gram = features.matmul(&features.transpose())?;
        let t = gram.rows();
        let mut boxsum = vec![vec![0.0; t + 1]; t + 1];
        for i in 0..t {
            let mut row_acc = 0.0;
            for j in 0..t {
                row_acc += gram.get(i, j);
                boxsum[i + 1][j + 1] = boxsum[i][j + 1] + row_acc;
            }
        }
        let mut diagsum = vec![0.0; t + 1];
        for i in 0..t {
            diagsum[i + 1] = diagsum[i] + gram.get(i, i);
        }
        Ok(ScatterTable { boxsum, diagsum })
    }

    /// Within-segment scatter of frames `[a, b)`.
    fn cost(&self, a: usize, b: usize) -> f64 {
        let len = (b - a) as f64;
        let boxed = self.boxsum[b][b] - self.boxsum[a][b] - self.boxsum[b][a] + self.boxsum[a][a];
        (self.diagsum[b] - self.diagsum[a]) - boxed / len
    }
}

/// Minimal total scatter of the first T frames split into exactly `m`
/// segments, for every m in `1..=max_segments`. Entry `m - 1` of the result
/// holds the m-segment cost.
pub fn dp_segment_costs(features: &Matrix, max_segments: usize) -> Result<Vec<f64>> {
    let (costs, _) = dp_tables(features, max_segments)?;
    let t = features.rows();
    Ok((1..=max_segments.min(t)).map(|m| costs[m][t]).collect())
}

/// `cost[m][n]` and the matching backtrack table `split[m][n]`.
type DpTables = (Vec<Vec<f64>>, Vec<Vec<usize>>);

/// DP tables: `cost[m][n]` = best scatter of the first n frames in m
/// segments; `split[m][n]` = start of the final segment in that optimum.
#[allow(clippy::needless_range_loop)]
fn dp_tables(features: &Matrix, max_segments: usize) -> Result<DpTables> {
    let t = features.rows();
    let table = ScatterTable::build(features)?;
    let m_cap = max_segments.min(t);

    let mut cost = vec![vec![f64::INFINITY; t + 1]; m_cap + 1];
    let mut split = vec![vec![0usize; t + 1]; m_cap + 1];
    for n in 1..=t {
        cost[1][n] = table.cost(0, n);
    }
    for m in 2..=m_cap {
        for n in m..=t {
            let mut best = f64::INFINITY;
            let mut best_j = m - 1;
            for j in m - 1..n {
                let c = cost[m - 1][j] + table.cost(j, n);
                if c < best {
                    best = c;
                    best_j = j;
                }
            }
            cost[m][n] = best;
            split[m][n] = best_j;
        }
    }
    Ok((cost, split))
}

/// Segment a video by minimizing within-segment scatter plus the penalized
/// segment count. Deterministic: ties in the DP resolve to the earliest
/// boundary, so the result is a pure function of its inputs.
#[allow(clippy::needless_range_loop)]
pub fn kts_segment(features: &Matrix, penalty: f64, max_segments: usize) -> Result<SegmentList> {
    let t = features.rows();
    if t < 2 {
        return Err(Error::Input(format!(
            "kts_segment needs at least 2 frames, got {}",
            t
        )));
    }
    if max_segments == 0 {
        return Err(Error::Input("max_segments must be >= 1".into()));
    }
    if !features.is_finite() {
        return Err(Error::Numeric("kts_segment: non-finite features".into()));
    }

    let (cost, split) = dp_tables(features, max_segments)?;
    let m_cap = max_segments.min(t);

    let mut best_m = 1;
    let mut best_objective = f64::INFINITY;
    for m in 1..=m_cap {
        let g = m as f64 * ((t as f64 / m as f64).ln() + 1.0);
        let objective = cost[m][t] + penalty * g;
        if objective < best_objective {
            best_objective = objective;
            best_m = m;
        }
    }

    let mut boundaries = vec![t];
    let mut n = t;
    for m in (2..=best_m).rev() {
        n = split[m][n];
        boundaries.push(n);
    }
    boundaries.push(0);
    boundaries.reverse();
    SegmentList::new(boundaries, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    fn block_features(blocks: &[(usize, Vec<f64>)], noise: f64, rng: &mut SeededRng) -> Matrix {
        let mut rows = Vec::new();
        for (len, anchor) in blocks {
            for _ in 0..*len {
                let row: Vec<f64> = anchor
                    .iter()
                    .map(|a| a + noise * rng.uniform(-1.0, 1.0))
                    .collect();
                rows.push(row);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_constant_blocks_split_at_the_boundary() {
        let mut rng = SeededRng::new(1);
        let features = block_features(
            &[
                (10, vec![0.0, 0.0, 0.0, 0.0]),
                (10, vec![2.0, 2.0, 2.0, 2.0]),
            ],
            0.0,
            &mut rng,
        );
        let segs = kts_segment(&features, 1.0, 4).unwrap();
        assert_eq!(segs.change_points(), &[10]);
    }

    #[test]
    fn constant_features_stay_unsegmented() {
        let features = Matrix::filled(30, 5, 0.7);
        for penalty in [0.01, 1.0, 10.0] {
            let segs = kts_segment(&features, penalty, 5).unwrap();
            assert!(segs.change_points().is_empty(), "penalty {}", penalty);
        }
    }

    #[test]
    fn single_frame_video_is_rejected() {
        let features = Matrix::filled(1, 3, 0.1);
        assert!(kts_segment(&features, 1.0, 2).is_err());
    }

    /// Exhaustive minimum over all boundary placements for exactly m segments.
    fn exhaustive_cost(features: &Matrix, m: usize) -> f64 {
        let t = features.rows();
        let gram = features.matmul(&features.transpose()).unwrap();
        let cost = |a: usize, b: usize| {
            let mut diag = 0.0;
            let mut boxed = 0.0;
            for i in a..b {
                diag += gram.get(i, i);
                for j in a..b {
                    boxed += gram.get(i, j);
                }
            }
            diag - boxed / (b - a) as f64
        };
        fn recurse(
            start: usize,
            remaining: usize,
            t: usize,
            cost: &impl Fn(usize, usize) -> f64,
        ) -> f64 {
            if remaining == 1 {
                return cost(start, t);
            }
            let mut best = f64::INFINITY;
            // The final `remaining - 1` segments each need one frame.
            for end in start + 1..=t - (remaining - 1) {
                let c = cost(start, end) + recurse(end, remaining - 1, t, cost);
                if c < best {
                    best = c;
                }
            }
            best
        }
        recurse(0, m, t, &cost)
    }

    #[test]
    fn dp_cost_matches_exhaustive_enumeration() {
        let mut rng = SeededRng::new(2);
        for trial in 0..10 {
            let t = 8 + (trial % 5) * 3; // up to 20 frames
            let features = Matrix::random_uniform(t, 3, -1.0, 1.0, &mut rng);
            let costs = dp_segment_costs(&features, 4).unwrap();
            for (idx, dp_cost) in costs.iter().enumerate() {
                let m = idx + 1;
                let brute = exhaustive_cost(&features, m);
                assert!(
                    (dp_cost - brute).abs() <= 1e-9 * brute.abs().max(1.0),
                    "t={} m={}: dp {} vs brute {}",
                    t,
                    m,
                    dp_cost,
                    brute
                );
            }
        }
    }

    #[test]
    fn segmentation_covers_frames_and_is_idempotent() {
        let mut rng = SeededRng::new(3);
        let features = block_features(
            &[(8, vec![0.0; 6]), (9, vec![3.0; 6]), (7, vec![-2.0; 6])],
            0.05,
            &mut rng,
        );
        let a = kts_segment(&features, 1.0, 6).unwrap();
        let b = kts_segment(&features, 1.0, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames(), 24);
        let covered: usize = a.segments().map(|(s, e)| e - s).sum();
        assert_eq!(covered, 24);
    }

    #[test]
    fn noisy_blocks_recover_true_change_points() {
        for seed in 0..20u64 {
            let mut rng = SeededRng::new(seed);
            let blocks: Vec<(usize, Vec<f64>)> = (0..3)
                .map(|b| {
                    let len = 6 + rng.uniform_usize(0, 6);
                    let mut anchor = vec![0.0; 8];
                    anchor[b % 8] = 4.0;
                    (len, anchor)
                })
                .collect();
            let expected: Vec<usize> = blocks
                .iter()
                .scan(0usize, |acc, (len, _)| {
                    *acc += len;
                    Some(*acc)
                })
                .take(blocks.len() - 1)
                .collect();
            let features = block_features(&blocks, 0.0, &mut rng);
            let segs = kts_segment(&features, 1.0, 5).unwrap();
            assert_eq!(segs.change_points(), expected.as_slice(), "seed {}", seed);
        }
    }
}
