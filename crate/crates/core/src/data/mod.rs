//! Dataset model: manifests, loading, synthetic corpora, and fold planning.

mod folds;
mod format;
mod synth;

pub use folds::{assemble_setting, kfold_splits, Fold, FoldPlan, Setting};
pub use format::{
    read_annotation_file, read_feature_file, write_annotation_file, write_feature_file,
    ANNOTATION_MAGIC, FEATURE_MAGIC,
};
pub use synth::{synth_dataset, SynthSpec};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{F1Aggregation, UserAnnotations};
use crate::model::{Channel, FeatureSequence, ImportanceScores};
use crate::tensor::Matrix;

/// Whether annotator scores are continuous in [0, 1] or binary 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelStyle {
    Continuous,
    Binary,
}

/// One video's entry in a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    pub frames: usize,
    pub dim: usize,
    pub fps: f64,
    /// Paths relative to the manifest's directory.
    pub feature_file: String,
    pub annotation_file: String,
    pub annotators: usize,
}

/// A dataset manifest, stored as a JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub label_style: LabelStyle,
    /// Preferred F1 aggregation for this dataset; `mean` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_aggregation: Option<F1Aggregation>,
    pub videos: Vec<VideoEntry>,
}

/// A fully loaded and validated video.
#[derive(Debug, Clone)]
pub struct LoadedVideo {
    pub id: String,
    pub fps: f64,
    pub features: FeatureSequence,
    pub annotations: UserAnnotations,
}

impl LoadedVideo {
    /// Training target: the mean annotator scores.
    pub fn target(&self) -> Result<ImportanceScores> {
        ImportanceScores::new(self.annotations.mean_scores().to_vec())
    }
}

/// An in-memory dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub label_style: LabelStyle,
    pub f1_aggregation: Option<F1Aggregation>,
    pub videos: Vec<LoadedVideo>,
}

impl Dataset {
    pub fn video_ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.id.clone()).collect()
    }

    pub fn video(&self, id: &str) -> Result<&LoadedVideo> {
        self.videos
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::Input(format!("dataset '{}' has no video '{}'", self.name, id)))
    }
}

/// Qualified video id `dataset/video` used by fold plans that span datasets.
pub fn qualify(dataset: &str, video: &str) -> String {
    format!("{}/{}", dataset, video)
}

/// Split a qualified id back into (dataset, video).
pub fn split_qualified(qualified: &str) -> Result<(&str, &str)> {
    qualified
        .split_once('/')
        .ok_or_else(|| Error::Input(format!("'{}' is not a qualified video id", qualified)))
}

/// Several datasets addressed by qualified video ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    datasets: BTreeMap<String, Dataset>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dataset: Dataset) -> Result<()> {
        if self.datasets.contains_key(&dataset.name) {
            return Err(Error::Input(format!(
                "duplicate dataset '{}'",
                dataset.name
            )));
        }
        self.datasets.insert(dataset.name.clone(), dataset);
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Result<&Dataset> {
        self.datasets
            .get(name)
            .ok_or_else(|| Error::Input(format!("no dataset named '{}'", name)))
    }

    pub fn video(&self, qualified: &str) -> Result<&LoadedVideo> {
        let (dataset, video) = split_qualified(qualified)?;
        self.dataset(dataset)?.video(video)
    }
}

/// Parse a manifest file.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    Ok(manifest)
}

/// Write a manifest as pretty JSON (deterministic field order).
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let display = path.display().to_string();
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json.as_bytes()).map_err(|e| Error::io(&display, e))?;
    Ok(())
}

/// Load a dataset from its manifest: every referenced file is read and
/// validated against the declared shapes before anything is returned.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let mut seen = std::collections::BTreeSet::new();
    for entry in &manifest.videos {
        if !seen.insert(&entry.id) {
            return Err(Error::Input(format!(
                "manifest '{}' lists video id '{}' twice",
                manifest.name, entry.id
            )));
        }
    }

    let mut videos = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let features = read_feature_file(
            &base.join(&entry.feature_file),
            &entry.id,
            entry.frames,
            entry.dim,
        )?;
        let annotations = read_annotation_file(
            &base.join(&entry.annotation_file),
            &entry.id,
            entry.annotators,
            entry.frames,
        )?;
        videos.push(LoadedVideo {
            id: entry.id.clone(),
            fps: entry.fps,
            features: FeatureSequence::new(Channel::Visual, features)?,
            annotations,
        });
    }

    Ok(Dataset {
        name: manifest.name,
        label_style: manifest.label_style,
        f1_aggregation: manifest.f1_aggregation,
        videos,
    })
}

/// Write one video's feature and annotation files into `out_dir`, fsynced,
/// returning the relative file names for the manifest.
pub fn write_features(
    video_id: &str,
    features: &Matrix,
    annotations: &UserAnnotations,
    out_dir: &Path,
) -> Result<(String, String)> {
    if features.rows() != annotations.frames() {
        return Err(Error::shape(
            "write_features",
            format!(
                "{} frames vs {} annotation frames",
                features.rows(),
                annotations.frames()
            ),
        ));
    }
    if !features.is_finite() {
        return Err(Error::Numeric(format!(
            "features for '{}' contain non-finite values",
            video_id
        )));
    }
    let feat_name = format!("{}.feat", video_id);
    let anno_name = format!("{}.anno", video_id);
    write_feature_file(&out_dir.join(&feat_name), features)?;
    write_annotation_file(&out_dir.join(&anno_name), annotations)?;
    Ok((feat_name, anno_name))
}
