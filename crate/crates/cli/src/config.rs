//! Run configuration: JSON config file plus flag overrides.
//!
//! Precedence is defaults < config file < command-line flags. The resolved
//! configuration is echoed verbatim into every artifact (checkpoints,
//! reports, CSVs reference it through the run directory), so two runs with
//! equal echoes are byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dmasum::data::Setting;
use dmasum::error::{Error, Result};
use dmasum::eval::F1Aggregation;
use dmasum::meta::{MetaConfig, OptimizerMode, TrainerKind};
use dmasum::model::{ChannelMode, ModelConfig};

/// Evaluation options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    pub budget: f64,
    /// None: use the dataset manifest's preference, falling back to mean.
    pub f1_aggregation: Option<F1Aggregation>,
    pub kts_penalty: f64,
    /// None: one segment per 15 frames.
    pub max_segments: Option<usize>,
    pub rank_rel_tol: f64,
    pub curve_samples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            budget: 0.15,
            f1_aggregation: None,
            kts_penalty: 1.0,
            max_segments: None,
            rank_rel_tol: 1e-6,
            curve_samples: 101,
        }
    }
}

/// The fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Target dataset manifest path.
    pub dataset: String,
    /// Auxiliary dataset manifest paths (augmented/transfer settings).
    pub aux: Vec<String>,
    pub setting: Setting,
    pub folds: usize,
    pub seed: u64,
    pub out_dir: String,
    pub trainer: TrainerKind,
    pub model: ModelConfig,
    pub meta: MetaConfig,
    pub eval: EvalOptions,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.meta.validate()?;
        if self.folds == 0 {
            return Err(Error::Input("folds must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval.budget) || self.eval.budget == 0.0 {
            return Err(Error::Input(format!(
                "budget {} outside (0, 1]",
                self.eval.budget
            )));
        }
        if self.eval.rank_rel_tol <= 0.0 {
            return Err(Error::Input("rank_rel_tol must be positive".into()));
        }
        if self.eval.curve_samples < 2 {
            return Err(Error::Input("curve_samples must be >= 2".into()));
        }
        if let TrainerKind::BatchMeta(0) = self.trainer {
            return Err(Error::Input("batch size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn echo(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}

/// Partial configuration as read from a JSON config file; every field is
/// optional so flags and defaults can fill the gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<String>,
    pub aux: Option<Vec<String>>,
    pub setting: Option<Setting>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub trainer: Option<TrainerKind>,
    pub model: Option<ModelSection>,
    pub meta: Option<MetaSection>,
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<String>,
    pub feature_dim: Option<usize>,
    pub attn_width: Option<usize>,
    pub visual_layers: Option<usize>,
    pub sequential_layers: Option<usize>,
    pub lstm_layers: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub head_hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub channel: Option<ChannelMode>,
    pub plain_softmax: Option<bool>,
    pub renormalize_rows: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    pub learner_rate: Option<f64>,
    pub meta_rate: Option<f64>,
    pub inner_steps: Option<usize>,
    pub epochs: Option<usize>,
    pub optimizer: Option<OptimizerMode>,
    pub inner_adam: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub budget: Option<f64>,
    pub f1_aggregation: Option<F1Aggregation>,
    pub kts_penalty: Option<f64>,
    pub max_segments: Option<usize>,
    pub rank_rel_tol: Option<f64>,
    pub curve_samples: Option<usize>,
}

pub fn read_file_config(path: &Path) -> Result<FileConfig> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let config: FileConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("config '{}': {}", display, e)))?;
    Ok(config)
}

impl ModelSection {
    /// Resolve against the preset (desk scale unless named otherwise).
    pub fn resolve(&self) -> Result<ModelConfig> {
        let mut model = match self.preset.as_deref() {
            None | Some("desk") => ModelConfig::desk_scale(),
            Some("full") => ModelConfig::full_scale(),
            Some(other) => {
                return Err(Error::Input(format!(
                    "unknown model preset '{}' (expected desk or full)",
                    other
                )))
            }
        };
        if let Some(v) = self.feature_dim {
            model.feature_dim = v;
        }
        if let Some(v) = self.attn_width {
            model.attn_width = v;
        }
        if let Some(v) = self.visual_layers {
            model.visual_layers = v;
        }
        if let Some(v) = self.sequential_layers {
            model.sequential_layers = v;
        }
        if let Some(v) = self.lstm_layers {
            model.lstm_layers = v;
        }
        if let Some(v) = self.lstm_hidden {
            model.lstm_hidden = v;
        }
        if let Some(v) = self.head_hidden {
            model.head_hidden = v;
        }
        if let Some(v) = self.dropout {
            model.dropout = v;
        }
        if let Some(v) = self.channel {
            model.channel = v;
        }
        if let Some(v) = self.plain_softmax {
            model.plain_softmax = v;
        }
        if let Some(v) = self.renormalize_rows {
            model.renormalize_rows = v;
        }
        Ok(model)
    }

    /// Whether the file pinned the feature dimension explicitly.
    pub fn pins_feature_dim(&self) -> bool {
        self.feature_dim.is_some()
    }
}

impl MetaSection {
    pub fn resolve(&self) -> MetaConfig {
        let mut meta = MetaConfig::default();
        if let Some(v) = self.learner_rate {
            meta.learner_rate = v;
        }
        if let Some(v) = self.meta_rate {
            meta.meta_rate = v;
        }
        if let Some(v) = self.inner_steps {
            meta.inner_steps = v;
        }
        if let Some(v) = self.epochs {
            meta.epochs = v;
        }
        if let Some(v) = self.optimizer {
            meta.optimizer = v;
        }
        if let Some(v) = self.inner_adam {
            meta.inner_adam = v;
        }
        meta
    }
}

impl EvalSection {
    pub fn resolve(&self) -> EvalOptions {
        let mut eval = EvalOptions::default();
        self.apply(&mut eval);
        eval
    }

    /// Overlay the section's set fields onto existing options.
    pub fn apply(&self, eval: &mut EvalOptions) {
        if let Some(v) = self.budget {
            eval.budget = v;
        }
        if let Some(v) = self.f1_aggregation {
            eval.f1_aggregation = Some(v);
        }
        if let Some(v) = self.kts_penalty {
            eval.kts_penalty = v;
        }
        if let Some(v) = self.max_segments {
            eval.max_segments = Some(v);
        }
        if let Some(v) = self.rank_rel_tol {
            eval.rank_rel_tol = v;
        }
        if let Some(v) = self.curve_samples {
            eval.curve_samples = v;
        }
    }
}
