use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use dmasum::checkpoint::save_checkpoint;
use dmasum::data::{Corpus, FoldPlan, Setting};
use dmasum::error::{Error, Result};
use dmasum::meta::{render_train_log, train, TrainerKind};
use dmasum::model::{ChannelMode, DmaSumModel};
use dmasum::tensor::SeededRng;

use crate::config::{read_file_config, FileConfig, RunConfig};
use crate::runner::{
    fold_dir, fold_seed, fold_thread_cap, load_corpus, plan_folds, run_folds, tasks_for,
};

use super::{ensure_dir, write_text};

#[derive(Clone, Copy, ValueEnum)]
pub enum SettingArg {
    Canonical,
    Augmented,
    Transfer,
}

impl From<SettingArg> for Setting {
    fn from(value: SettingArg) -> Self {
        match value {
            SettingArg::Canonical => Setting::Canonical,
            SettingArg::Augmented => Setting::Augmented,
            SettingArg::Transfer => Setting::Transfer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ChannelArg {
    Dual,
    Visual,
    Sequential,
}

impl From<ChannelArg> for ChannelMode {
    fn from(value: ChannelArg) -> Self {
        match value {
            ChannelArg::Dual => ChannelMode::Dual,
            ChannelArg::Visual => ChannelMode::Visual,
            ChannelArg::Sequential => ChannelMode::Sequential,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target dataset manifest.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Auxiliary dataset manifests (repeatable).
    #[arg(long)]
    aux: Vec<PathBuf>,
    #[arg(long)]
    setting: Option<SettingArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Inner-loop steps per task (m).
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Learner rate (alpha).
    #[arg(long)]
    alpha: Option<f64>,
    /// Meta rate (beta).
    #[arg(long)]
    beta: Option<f64>,
    /// Ablation: ordinary Adam, no meta learning.
    #[arg(long, conflicts_with = "batch_meta")]
    no_meta: bool,
    /// Ablation: batched inner loop with this batch size.
    #[arg(long)]
    batch_meta: Option<usize>,
    /// Ablation: standard softmax attention instead of the mixture.
    #[arg(long)]
    plain_softmax: bool,
    /// Channel ablation.
    #[arg(long)]
    channel: Option<ChannelArg>,
}

fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let file: FileConfig = match &args.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };

    let dataset = args
        .dataset
        .as_ref()
        .map(|p| p.display().to_string())
        .or(file.dataset)
        .ok_or_else(|| Error::Input("a target dataset manifest is required (--dataset)".into()))?;
    let aux: Vec<String> = if args.aux.is_empty() {
        file.aux.unwrap_or_default()
    } else {
        args.aux.iter().map(|p| p.display().to_string()).collect()
    };
    let out_dir = args
        .out
        .as_ref()
        .map(|p| p.display().to_string())
        .or(file.out_dir)
        .ok_or_else(|| Error::Input("an output directory is required (--out)".into()))?;

    let trainer = if args.no_meta {
        TrainerKind::NoMeta
    } else if let Some(batch) = args.batch_meta {
        TrainerKind::BatchMeta(batch)
    } else {
        file.trainer.unwrap_or(TrainerKind::Meta)
    };

    let model_section = file.model.clone().unwrap_or_default();
    let mut model = model_section.resolve()?;
    if let Some(channel) = args.channel {
        model.channel = channel.into();
    }
    if args.plain_softmax {
        model.plain_softmax = true;
    }

    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut meta = file.meta.clone().unwrap_or_default().resolve();
    if let Some(v) = args.epochs {
        meta.epochs = v;
    }
    if let Some(v) = args.inner_steps {
        meta.inner_steps = v;
    }
    if let Some(v) = args.alpha {
        meta.learner_rate = v;
    }
    if let Some(v) = args.beta {
        meta.meta_rate = v;
    }
    meta.shuffle_seed = seed;

    let config = RunConfig {
        dataset,
        aux,
        setting: args
            .setting
            .map(Setting::from)
            .or(file.setting)
            .unwrap_or(Setting::Canonical),
        folds: args.folds.or(file.folds).unwrap_or(5),
        seed,
        out_dir,
        trainer,
        model,
        meta,
        eval: file.eval.unwrap_or_default().resolve(),
    };
    Ok(config)
}

/// All videos the run touches must share the configured feature dimension.
fn reconcile_feature_dim(
    config: &mut RunConfig,
    pinned: bool,
    corpus: &Corpus,
    target: &str,
    aux: &[String],
) -> Result<()> {
    let mut dims = std::collections::BTreeSet::new();
    for name in std::iter::once(target).chain(aux.iter().map(String::as_str)) {
        for video in &corpus.dataset(name)?.videos {
            dims.insert(video.features.dim());
        }
    }
    if dims.len() != 1 {
        return Err(Error::Input(format!(
            "datasets mix feature dimensions {:?}",
            dims
        )));
    }
    let dim = dims.into_iter().next().unwrap();
    if pinned && config.model.feature_dim != dim {
        return Err(Error::Input(format!(
            "config pins feature_dim {} but the data is {}-dimensional",
            config.model.feature_dim, dim
        )));
    }
    config.model.feature_dim = dim;
    Ok(())
}

fn train_fold(config: &RunConfig, corpus: &Corpus, plan: &FoldPlan, fold: usize) -> Result<()> {
    let tasks = tasks_for(corpus, &plan.folds[fold].train)?;
    let model = DmaSumModel::new(config.model.clone())?;
    let seed = fold_seed(config.seed, fold);
    let mut init_rng = SeededRng::new(seed);
    let init = model.init_params(&mut init_rng);

    let mut meta = config.meta.clone();
    meta.shuffle_seed = seed;
    let dropout_seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let outcome = train(&model, &tasks, init, &meta, config.trainer, dropout_seed)?;

    let dir = fold_dir(Path::new(&config.out_dir), fold);
    ensure_dir(&dir)?;
    let echo = serde_json::json!({
        "run": config.echo()?,
        "fold": fold,
        "trainer": config.trainer.label(),
    });
    save_checkpoint(
        &dir.join("checkpoint.bin"),
        model.config(),
        &outcome.params,
        seed,
        echo,
    )?;
    write_text(
        &dir.join("train_log.csv"),
        &render_train_log(&config.trainer.label(), seed, &outcome.log),
    )?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<()> {
    let pinned = args
        .config
        .as_ref()
        .map(|p| read_file_config(p).map(|f| f.model.unwrap_or_default().pins_feature_dim()))
        .transpose()?
        .unwrap_or(false);

    let mut config = resolve_config(&args)?;
    let (corpus, target, aux) = load_corpus(&config)?;
    reconcile_feature_dim(&mut config, pinned, &corpus, &target, &aux)?;
    config.validate()?;

    let plan = plan_folds(&config, &corpus, &target, &aux)?;
    let out_dir = PathBuf::from(&config.out_dir);
    ensure_dir(&out_dir)?;
    write_text(
        &out_dir.join("config.json"),
        &serde_json::to_string_pretty(&config)?,
    )?;
    write_text(
        &out_dir.join("plan.json"),
        &serde_json::to_string_pretty(&plan)?,
    )?;

    let cap = fold_thread_cap();
    run_folds(plan.folds.len(), cap, |fold| {
        train_fold(&config, &corpus, &plan, fold)
    })?;

    println!(
        "trained {} fold(s) with {} into {}",
        plan.folds.len(),
        config.trainer.label(),
        out_dir.display()
    );
    Ok(())
}
