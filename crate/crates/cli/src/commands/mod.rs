pub mod eval;
pub mod rank_diag;
pub mod summarize;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use dmasum::error::{Error, Result};

use crate::config::RunConfig;

/// Read the resolved configuration a train run left behind.
pub fn read_run_config(run_dir: &Path) -> Result<RunConfig> {
    let path = run_dir.join("config.json");
    let display = path.display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Input(format!(
            "'{}' is not a run directory ({})",
            run_dir.display(),
            e
        ))
    })?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("config '{}': {}", display, e)))?;
    Ok(config)
}

pub fn read_plan(run_dir: &Path) -> Result<dmasum::data::FoldPlan> {
    let path = run_dir.join("plan.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Input(format!("missing fold plan '{}': {}", path.display(), e)))?;
    let plan = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("plan '{}': {}", path.display(), e)))?;
    Ok(plan)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn out_or_run(out: Option<PathBuf>, run_dir: &Path) -> PathBuf {
    out.unwrap_or_else(|| run_dir.to_path_buf())
}

/// Overlay the `eval` section of an override config file, when given, onto
/// a run's stored configuration. Post-training commands accept this so
/// budgets, tolerances, and segmentation caps can change without retraining.
pub fn apply_eval_overrides(config: &mut RunConfig, path: Option<&Path>) -> Result<()> {
    if let Some(path) = path {
        let file = crate::config::read_file_config(path)?;
        if let Some(section) = file.eval {
            section.apply(&mut config.eval);
        }
    }
    Ok(())
}
