//! Segmentation, key-shot selection, and the evaluation protocol.
//!
//! The pipeline per video: predicted frame scores are converted to a
//! key-shot summary (kernel temporal segmentation, then an exact 0/1
//! knapsack over segments under a 15% frame budget), the summary is scored
//! against user summaries with harmonic-mean F1, and the raw score vectors
//! are compared against every annotator with Kendall tau-b and Spearman
//! rho. Correlation curves visualize how much annotator importance the
//! predicted ranking captures.

mod correlation;
mod curve;
mod knapsack;
mod kts;

pub use correlation::{average_ranks, kendall_tau, spearman_rho};
pub use curve::{correlation_curve, write_curve_csv, write_curve_svg, CorrelationCurve};
pub use knapsack::knapsack_select;
pub use kts::{default_max_segments, dp_segment_costs, kts_segment, DEFAULT_KTS_PENALTY};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Disjoint cover of `[0, T)` by ordered change points
/// `0 = c_0 < c_1 < ... < c_k = T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentList {
    boundaries: Vec<usize>,
}

impl SegmentList {
    pub fn new(boundaries: Vec<usize>, frames: usize) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 || *boundaries.last().unwrap() != frames {
            return Err(Error::Input(format!(
                "segment boundaries must run from 0 to {}, got {:?}",
                frames, boundaries
            )));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "segment boundaries must be strictly increasing, got {:?}",
                boundaries
            )));
        }
        Ok(SegmentList { boundaries })
    }

    /// Interior change points (excludes 0 and T).
    pub fn change_points(&self) -> &[usize] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn frames(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-open frame ranges `[start, end)` of every segment.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn segment_of(&self, frame: usize) -> Option<usize> {
        if frame >= self.frames() {
            return None;
        }
        Some(match self.boundaries.binary_search(&frame) {
            Ok(i) => i,
            Err(i) => i - 1,
        })
    }
}

/// Binary key-shot selection over the frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    selected: Vec<bool>,
    budget: f64,
}

impl Summary {
    /// Default summary length as a fraction of the video.
    pub const DEFAULT_BUDGET: f64 = 0.15;

    /// Validates the two structural invariants: the selection never exceeds
    /// `floor(budget * T)` frames and is a union of whole segments.
    pub fn new(selected: Vec<bool>, budget: f64, segments: &SegmentList) -> Result<Self> {
        if selected.len() != segments.frames() {
            return Err(Error::shape(
                "summary",
                format!("{} flags vs {} frames", selected.len(), segments.frames()),
            ));
        }
        let cap = (budget * selected.len() as f64).floor() as usize;
        let count = selected.iter().filter(|&&s| s).count();
        if count > cap {
            return Err(Error::Input(format!(
                "summary selects {} frames, budget allows {}",
                count, cap
            )));
        }
        for (start, end) in segments.segments() {
            let first = selected[start];
            if selected[start..end].iter().any(|&s| s != first) {
                return Err(Error::Input(format!(
                    "summary splits segment [{}, {})",
                    start, end
                )));
            }
        }
        Ok(Summary { selected, budget })
    }

    /// A raw selection vector with only the budget invariant checked, for
    /// user-provided summaries that were built from their own segments.
    pub fn from_flags_unchecked(selected: Vec<bool>, budget: f64) -> Self {
        Summary { selected, budget }
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn frame_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Frame-level scores and key-shot summaries from `U` human annotators.
#[derive(Debug, Clone)]
pub struct UserAnnotations {
    scores: Matrix,
    mean: Vec<f64>,
    keyshots: Vec<Vec<bool>>,
}

impl UserAnnotations {
    pub fn new(scores: Matrix, mean: Vec<f64>, keyshots: Vec<Vec<bool>>) -> Result<Self> {
        let (users, frames) = scores.shape();
        if users == 0 {
            return Err(Error::Input(
                "annotations need at least one annotator".into(),
            ));
        }
        if mean.len() != frames || keyshots.len() != users {
            return Err(Error::shape(
                "user_annotations",
                format!(
                    "mean {} / keyshots {} vs {} users x {} frames",
                    mean.len(),
                    keyshots.len(),
                    users,
                    frames
                ),
            ));
        }
        if keyshots.iter().any(|k| k.len() != frames) {
            return Err(Error::shape("user_annotations", "keyshot length mismatch"));
        }
        for v in scores.data().iter().chain(&mean) {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(Error::Input(format!(
                    "annotation score {} outside [0, 1]",
                    v
                )));
            }
        }
        Ok(UserAnnotations {
            scores,
            mean,
            keyshots,
        })
    }

    pub fn annotators(&self) -> usize {
        self.scores.rows()
    }

    pub fn frames(&self) -> usize {
        self.scores.cols()
    }

    pub fn annotator_scores(&self, u: usize) -> &[f64] {
        self.scores.row(u)
    }

    pub fn mean_scores(&self) -> &[f64] {
        &self.mean
    }

    pub fn keyshot(&self, u: usize) -> &[bool] {
        &self.keyshots[u]
    }

    pub fn scores_matrix(&self) -> &Matrix {
        &self.scores
    }
}

/// How per-annotator F1 values are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Aggregation {
    Mean,
    Max,
}

impl F1Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            F1Aggregation::Mean => "mean",
            F1Aggregation::Max => "max",
        }
    }
}

fn f1_single(machine: &[bool], user: &[bool]) -> f64 {
    let overlap = machine.iter().zip(user).filter(|(&m, &u)| m && u).count() as f64;
    let m_count = machine.iter().filter(|&&m| m).count() as f64;
    let u_count = user.iter().filter(|&&u| u).count() as f64;
    let precision = if m_count > 0.0 {
        overlap / m_count
    } else {
        0.0
    };
    let recall = if u_count > 0.0 {
        overlap / u_count
    } else {
        0.0
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Harmonic-mean F-score (in percent) of frame overlap between a machine
/// summary and each user's key-shot summary, aggregated across annotators.
pub fn f1_keyshot(machine: &Summary, users: &UserAnnotations, agg: F1Aggregation) -> Result<f64> {
    if machine.len() != users.frames() {
        return Err(Error::shape(
            "f1_keyshot",
            format!("{} frames vs {}", machine.len(), users.frames()),
        ));
    }
    let per_user: Vec<f64> = (0..users.annotators())
        .map(|u| f1_single(machine.selected(), users.keyshot(u)))
        .collect();
    let value = match agg {
        F1Aggregation::Mean => per_user.iter().sum::<f64>() / per_user.len() as f64,
        F1Aggregation::Max => per_user.iter().fold(0.0f64, |m, &v| m.max(v)),
    };
    Ok(value * 100.0)
}

/// Averaged rank-order coefficients against every annotator's frame scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolCoefficients {
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    /// Annotators whose coefficient was undefined (all-tied scores) and skipped.
    pub tau_skipped: usize,
    pub rho_skipped: usize,
}

/// Kendall tau-b and Spearman rho of the prediction against each annotator's
/// frame scores, averaged over annotators. Annotators with undefined
/// coefficients are skipped and counted.
pub fn rank_correlation_protocol(
    pred: &[f64],
    users: &UserAnnotations,
) -> Result<ProtocolCoefficients> {
    if pred.len() != users.frames() {
        return Err(Error::shape(
            "rank_correlation_protocol",
            format!("{} predictions vs {} frames", pred.len(), users.frames()),
        ));
    }
    let mut taus = Vec::new();
    let mut rhos = Vec::new();
    let mut tau_skipped = 0;
    let mut rho_skipped = 0;
    for u in 0..users.annotators() {
        let reference = users.annotator_scores(u);
        match kendall_tau(pred, reference) {
            Ok(t) => taus.push(t),
            Err(Error::UndefinedCoefficient(_)) => tau_skipped += 1,
            Err(e) => return Err(e),
        }
        match spearman_rho(pred, reference) {
            Ok(r) => rhos.push(r),
            Err(Error::UndefinedCoefficient(_)) => rho_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Ok(ProtocolCoefficients {
        tau: mean(&taus),
        rho: mean(&rhos),
        tau_skipped,
        rho_skipped,
    })
}

/// Metrics for one video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerVideoMetrics {
    pub f1: f64,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub f1: f64,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkippedAnnotators {
    pub tau: usize,
    pub rho: usize,
}

/// Published reference results for the standard benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceResults {
    pub f1: f64,
    pub tau: f64,
    pub rho: f64,
}

/// Reference numbers for a benchmark dataset, keyed by (case-insensitive)
/// name. Reports echo these for side-by-side comparison; nothing is
/// asserted against them.
pub fn reference_results(dataset: &str) -> Option<ReferenceResults> {
    match dataset.to_ascii_lowercase().as_str() {
        "summe" => Some(ReferenceResults {
            f1: 54.3,
            tau: 0.063,
            rho: 0.089,
        }),
        "tvsum" => Some(ReferenceResults {
            f1: 61.4,
            tau: 0.203,
            rho: 0.267,
        }),
        _ => None,
    }
}

/// Side-by-side comparison against published reference results; purely
/// informational, carried by reports on recognized benchmark datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub dataset: String,
    pub reference: ReferenceResults,
    pub achieved: AggregateMetrics,
    pub delta_f1: f64,
}

/// The evaluation report written as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_video: BTreeMap<String, PerVideoMetrics>,
    pub aggregate: AggregateMetrics,
    /// F1 aggregation that was applied.
    pub aggregation: F1Aggregation,
    pub skipped_annotators: SkippedAnnotators,
    /// Which F1 protocols this report supports.
    pub protocol_support: BTreeMap<String, String>,
    /// Present when the target dataset is a recognized benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_comparison: Option<ReferenceComparison>,
    pub config_echo: serde_json::Value,
}

impl EvalReport {
    pub fn assemble(
        per_video: BTreeMap<String, PerVideoMetrics>,
        aggregation: F1Aggregation,
        skipped: SkippedAnnotators,
        config_echo: serde_json::Value,
    ) -> Result<Self> {
        if per_video.is_empty() {
            return Err(Error::Input("report needs at least one video".into()));
        }
        let n = per_video.len() as f64;
        let f1 = per_video.values().map(|m| m.f1).sum::<f64>() / n;
        let mean_of = |pick: fn(&PerVideoMetrics) -> Option<f64>| {
            let defined: Vec<f64> = per_video.values().filter_map(pick).collect();
            if defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            }
        };
        let mut protocol_support = BTreeMap::new();
        protocol_support.insert("kts".into(), "supported".into());
        protocol_support.insert("two-peak".into(), "unsupported".into());
        protocol_support.insert("randomized-kts".into(), "unsupported".into());
        Ok(EvalReport {
            aggregate: AggregateMetrics {
                f1,
                tau: mean_of(|m| m.tau),
                rho: mean_of(|m| m.rho),
            },
            per_video,
            aggregation,
            skipped_annotators: skipped,
            protocol_support,
            reference_comparison: None,
            config_echo,
        })
    }

    /// Attach the benchmark comparison when the dataset has reference
    /// numbers.
    pub fn with_reference(mut self, dataset: &str) -> Self {
        if let Some(reference) = reference_results(dataset) {
            self.reference_comparison = Some(ReferenceComparison {
                dataset: dataset.to_string(),
                reference,
                achieved: self.aggregate,
                delta_f1: self.aggregate.f1 - reference.f1,
            });
        }
        self
    }
}
