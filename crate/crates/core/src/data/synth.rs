//! Synthetic corpus generation.
//!
//! Videos are piecewise scenes: each segment gets an anchor vector with one
//! dominant coordinate, frames are the anchor plus small noise, so kernel
//! segmentation has real change points to find. Each annotator scores a
//! noisy copy of the per-segment importance; the ground truth is their
//! mean, and each annotator's key-shot summary is a knapsack selection of
//! the true segments under the standard budget. Byte-identical output for
//! equal seeds.

use std::path::{Path, PathBuf};

use super::{write_features, write_manifest, DatasetManifest, LabelStyle, VideoEntry};
use crate::error::{Error, Result};
use crate::eval::{knapsack_select, F1Aggregation, SegmentList, Summary, UserAnnotations};
use crate::tensor::{Matrix, SeededRng};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub videos: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub dim: usize,
    pub annotators: usize,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.videos == 0 || self.dim == 0 || self.annotators == 0 {
            return Err(Error::Input(
                "synth spec needs positive video, dim, and annotator counts".into(),
            ));
        }
        if self.t_min < 8 || self.t_max < self.t_min {
            return Err(Error::Input(format!(
                "synth frame range {}..{} invalid (need 8 <= t_min <= t_max)",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Random segment lengths covering `frames` with at least `min_len` each.
/// Scene count scales with length (one scene per ~8 frames) so key-shot
/// budgets can fit whole segments.
fn random_segments(frames: usize, rng: &mut SeededRng) -> Vec<usize> {
    let min_len = 4;
    let cap = (frames / min_len).max(1);
    let target = (frames / 8).max(1);
    let lo = (target * 3 / 4).clamp(1, cap);
    let hi = (target * 5 / 4).clamp(lo, cap);
    let count = if lo == hi {
        lo
    } else {
        rng.uniform_usize(lo, hi + 1)
    };
    let mut lens = vec![min_len; count];
    let mut spare = frames - min_len * count;
    for len in lens.iter_mut().take(count.saturating_sub(1)) {
        // Spread the spare frames with a bias toward even scene lengths.
        let share = (2 * spare / count.max(1)).min(spare);
        let extra = if share == 0 {
            0
        } else {
            rng.uniform_usize(0, share + 1)
        };
        *len += extra;
        spare -= extra;
    }
    lens[count - 1] += spare;
    lens
}

struct SynthVideo {
    features: Matrix,
    annotations: UserAnnotations,
}

fn generate_video(spec: &SynthSpec, rng: &mut SeededRng) -> Result<SynthVideo> {
    let frames = if spec.t_min == spec.t_max {
        spec.t_min
    } else {
        rng.uniform_usize(spec.t_min, spec.t_max + 1)
    };
    let lens = random_segments(frames, rng);

    let mut boundaries = vec![0usize];
    for len in &lens {
        boundaries.push(boundaries.last().unwrap() + len);
    }
    let segments = SegmentList::new(boundaries, frames)?;

    // Per-segment anchors with one dominant coordinate keep scenes apart.
    let anchors: Vec<Vec<f64>> = (0..lens.len())
        .map(|s| {
            let mut anchor: Vec<f64> = (0..spec.dim).map(|_| rng.uniform(-0.5, 0.5)).collect();
            anchor[s % spec.dim] += 3.0;
            anchor
        })
        .collect();
    let mut feature_rows = Vec::with_capacity(frames);
    for (s, (start, end)) in segments.segments().enumerate() {
        for _ in start..end {
            let row: Vec<f64> = anchors[s]
                .iter()
                .map(|a| a + rng.normal(0.0, 0.08))
                .collect();
            feature_rows.push(row);
        }
    }
    let features = Matrix::from_rows(&feature_rows)?;

    let base_importance: Vec<f64> = (0..lens.len()).map(|_| rng.uniform(0.1, 0.9)).collect();
    let mut score_rows = Vec::with_capacity(spec.annotators);
    for _ in 0..spec.annotators {
        let mut row = Vec::with_capacity(frames);
        for (s, (start, end)) in segments.segments().enumerate() {
            for _ in start..end {
                row.push(clamp01(base_importance[s] + rng.normal(0.0, 0.12)));
            }
        }
        score_rows.push(row);
    }
    let scores = Matrix::from_rows(&score_rows)?;
    let mean: Vec<f64> = (0..frames)
        .map(|c| {
            (0..spec.annotators).map(|u| scores.get(u, c)).sum::<f64>() / spec.annotators as f64
        })
        .collect();

    let keyshots: Vec<Vec<bool>> = (0..spec.annotators)
        .map(|u| {
            knapsack_select(scores.row(u), &segments, Summary::DEFAULT_BUDGET)
                .map(|s| s.selected().to_vec())
        })
        .collect::<Result<_>>()?;

    let annotations = UserAnnotations::new(scores, mean, keyshots)?;
    Ok(SynthVideo {
        features,
        annotations,
    })
}

/// Generate a synthetic dataset under `out_dir` and return the manifest path.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let mut entries = Vec::with_capacity(spec.videos);
    for v in 0..spec.videos {
        let mut rng = SeededRng::new(spec.seed).derive(v as u64 + 1);
        let video = generate_video(spec, &mut rng)?;
        let id = format!("synth_{:03}", v);
        let (feature_file, annotation_file) =
            write_features(&id, &video.features, &video.annotations, out_dir)?;
        entries.push(VideoEntry {
            id,
            frames: video.features.rows(),
            dim: spec.dim,
            fps: 30.0,
            feature_file,
            annotation_file,
            annotators: spec.annotators,
        });
    }

    let manifest = DatasetManifest {
        name: format!("synth-{}", spec.seed),
        label_style: LabelStyle::Continuous,
        f1_aggregation: Some(F1Aggregation::Mean),
        videos: entries,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest_path)
}
