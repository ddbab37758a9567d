//! Shared run machinery: corpus loading, fold planning, parallel fold
//! execution, and the per-video scoring pipeline.

use std::path::{Path, PathBuf};

use dmasum::autodiff::ParameterVector;
use dmasum::data::{assemble_setting, load_dataset, Corpus, Dataset, FoldPlan};
use dmasum::error::{Error, Result};
use dmasum::eval::{
    default_max_segments, f1_keyshot, knapsack_select, kts_segment, F1Aggregation, SegmentList,
    Summary,
};
use dmasum::meta::VideoTask;
use dmasum::model::DmaSumModel;

use crate::config::RunConfig;

/// Load the target and auxiliary datasets named by the config.
pub fn load_corpus(config: &RunConfig) -> Result<(Corpus, String, Vec<String>)> {
    let target = load_dataset(Path::new(&config.dataset))?;
    let target_name = target.name.clone();
    let mut corpus = Corpus::new();
    let mut aux_names = Vec::new();
    corpus.insert(target)?;
    for path in &config.aux {
        let dataset = load_dataset(Path::new(path))?;
        aux_names.push(dataset.name.clone());
        corpus.insert(dataset)?;
    }
    Ok((corpus, target_name, aux_names))
}

/// Build the fold plan for the configured setting.
pub fn plan_folds(
    config: &RunConfig,
    corpus: &Corpus,
    target: &str,
    aux: &[String],
) -> Result<FoldPlan> {
    let target_ds = corpus.dataset(target)?;
    let aux_ds: Vec<Dataset> = aux
        .iter()
        .map(|name| corpus.dataset(name).cloned())
        .collect::<Result<_>>()?;
    assemble_setting(
        target_ds,
        &aux_ds,
        config.setting,
        config.folds,
        config.seed,
    )
}

/// Resolve qualified ids into training tasks.
pub fn tasks_for(corpus: &Corpus, ids: &[String]) -> Result<Vec<VideoTask>> {
    ids.iter()
        .map(|id| {
            let video = corpus.video(id)?;
            VideoTask::new(id.clone(), video.features.clone(), video.target()?)
        })
        .collect()
}

/// Fold parallelism cap: `DMASUM_THREADS`, clamped to at least 1; defaults
/// to the available cores.
pub fn fold_thread_cap() -> usize {
    match std::env::var("DMASUM_THREADS") {
        Ok(v) => v.parse::<usize>().unwrap_or(1).max(1),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

/// Run one closure per fold, at most `cap` folds at a time. Results come
/// back ordered by fold index regardless of scheduling.
pub fn run_folds<T, F>(fold_count: usize, cap: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let mut results: Vec<Option<Result<T>>> = (0..fold_count).map(|_| None).collect();
    for chunk_start in (0..fold_count).step_by(cap.max(1)) {
        let chunk_end = (chunk_start + cap.max(1)).min(fold_count);
        let mut chunk: Vec<(usize, Result<T>)> = Vec::with_capacity(chunk_end - chunk_start);
        std::thread::scope(|scope| {
            let job = &job;
            let handles: Vec<_> = (chunk_start..chunk_end)
                .map(|fold| scope.spawn(move || (fold, job(fold))))
                .collect();
            for handle in handles {
                match handle.join() {
                    Ok(pair) => chunk.push(pair),
                    Err(_) => {
                        chunk.push((usize::MAX, Err(Error::State("fold worker panicked".into()))))
                    }
                }
            }
        });
        for (fold, result) in chunk {
            if fold == usize::MAX {
                return Err(result
                    .err()
                    .unwrap_or_else(|| Error::State("fold worker panicked".into())));
            }
            results[fold] = Some(result);
        }
    }
    results
        .into_iter()
        .map(|slot| slot.expect("every fold ran"))
        .collect()
}

/// Per-fold RNG stream for initialization and dropout.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn fold_dir(out_dir: &Path, fold: usize) -> PathBuf {
    out_dir.join(format!("fold{}", fold))
}

/// Filesystem-safe name for a qualified video id.
pub fn safe_name(qualified: &str) -> String {
    qualified.replace('/', "_")
}

/// F1 aggregation for the target dataset: explicit config beats the
/// manifest preference, which beats mean.
pub fn aggregation_for(config: &RunConfig, dataset: &Dataset) -> F1Aggregation {
    config
        .eval
        .f1_aggregation
        .or(dataset.f1_aggregation)
        .unwrap_or(F1Aggregation::Mean)
}

/// Segmentation and key-shot selection for one video's predicted scores.
pub fn summarize_scores(
    config: &RunConfig,
    features: &dmasum::tensor::Matrix,
    scores: &[f64],
) -> Result<(SegmentList, Summary)> {
    let max_segments = config
        .eval
        .max_segments
        .unwrap_or_else(|| default_max_segments(features.rows()));
    let segments = kts_segment(features, config.eval.kts_penalty, max_segments)?;
    let summary = knapsack_select(scores, &segments, config.eval.budget)?;
    Ok((segments, summary))
}

/// F1 of a machine summary against the annotations.
pub fn video_f1(
    summary: &Summary,
    video: &dmasum::data::LoadedVideo,
    agg: F1Aggregation,
) -> Result<f64> {
    f1_keyshot(summary, &video.annotations, agg)
}

/// Importance scores for one video from a trained model, dropout disabled.
pub fn predict_scores(
    model: &DmaSumModel,
    params: &ParameterVector,
    video: &dmasum::data::LoadedVideo,
) -> Result<Vec<f64>> {
    let (scores, _) = model.predict(params, &video.features, false)?;
    Ok(scores.values().to_vec())
}
