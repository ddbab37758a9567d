use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use dmasum::attention::{rank_diagnose, write_rank_csv, RankBucket, RankCsvRow, RankMode};
use dmasum::checkpoint::load_checkpoint;
use dmasum::error::{Error, Result};
use dmasum::model::DmaSumModel;

use crate::runner::{
    aggregation_for, fold_dir, load_corpus, safe_name, summarize_scores, video_f1,
};

use super::{apply_eval_overrides, ensure_dir, out_or_run, read_plan, read_run_config, write_text};

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Raw,
    Log,
    Both,
}

#[derive(Args)]
pub struct RankDiagArgs {
    /// A directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Optional config file whose `eval` section overrides the run's
    /// evaluation options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rank matrix mode.
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    /// Relative singular-value tolerance override.
    #[arg(long)]
    rel_tol: Option<f64>,
}

struct DiagRow {
    video_id: String,
    channel: &'static str,
    mode: RankMode,
    diag: dmasum::attention::RankDiagnostic,
    f1: f64,
}

pub fn run(args: RankDiagArgs) -> Result<()> {
    let mut config = read_run_config(&args.run)?;
    apply_eval_overrides(&mut config, args.config.as_deref())?;
    let plan = read_plan(&args.run)?;
    let (corpus, target, _) = load_corpus(&config)?;
    let agg = aggregation_for(&config, corpus.dataset(&target)?);
    let rel_tol = args.rel_tol.unwrap_or(config.eval.rank_rel_tol);
    if rel_tol <= 0.0 {
        return Err(Error::Input(format!(
            "rel_tol {} must be positive",
            rel_tol
        )));
    }
    let modes: &[RankMode] = match args.mode {
        ModeArg::Raw => &[RankMode::Raw],
        ModeArg::Log => &[RankMode::Log],
        ModeArg::Both => &[RankMode::Raw, RankMode::Log],
    };

    let out_dir = out_or_run(args.out, &args.run).join("rank");
    ensure_dir(&out_dir)?;

    let mut rows: Vec<DiagRow> = Vec::new();
    for (fold, fold_spec) in plan.folds.iter().enumerate() {
        let checkpoint = load_checkpoint(&fold_dir(&args.run, fold).join("checkpoint.bin"))?;
        let model = DmaSumModel::new(checkpoint.config.clone())?;
        for id in &fold_spec.test {
            let video = corpus.video(id)?;
            let (scores, maps) = model.predict(&checkpoint.params, &video.features, true)?;
            let maps = maps.expect("maps requested");
            let (_, summary) = summarize_scores(&config, video.features.matrix(), scores.values())?;
            let f1 = video_f1(&summary, video, agg)?;

            // The final layer of each active channel is the diagnosed map.
            let channels: Vec<(&'static str, &dmasum::attention::LayerMaps)> = [
                ("visual", maps.visual.last()),
                ("sequential", maps.sequential.last()),
            ]
            .into_iter()
            .filter_map(|(name, layer)| layer.map(|l| (name, l)))
            .collect();

            for (channel, layer) in channels {
                for &mode in modes {
                    let diag = rank_diagnose(layer.chosen(), mode, rel_tol)?;
                    rows.push(DiagRow {
                        video_id: id.clone(),
                        channel,
                        mode,
                        diag,
                        f1,
                    });
                }
            }
        }
    }

    // Per channel x mode CSVs with the standard header.
    for channel in ["visual", "sequential"] {
        for &mode in modes {
            let subset: Vec<RankCsvRow> = rows
                .iter()
                .filter(|r| r.channel == channel && r.mode == mode)
                .map(|r| RankCsvRow {
                    video_id: safe_name(&r.video_id),
                    diag: r.diag,
                })
                .collect();
            if !subset.is_empty() {
                write_rank_csv(
                    &out_dir.join(format!("{}_{}.csv", channel, mode.label())),
                    &subset,
                )?;
            }
        }
    }

    // Bucket histogram with per-bucket mean F1.
    let mut histogram: BTreeMap<(&str, &str, RankBucket), (usize, f64)> = BTreeMap::new();
    for row in &rows {
        let entry = histogram
            .entry((row.channel, row.mode.label(), row.diag.bucket))
            .or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += row.f1;
    }
    let mut csv = String::from("channel,mode,bucket,count,mean_f1\n");
    for ((channel, mode, bucket), (count, f1_sum)) in &histogram {
        csv.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            channel,
            mode,
            bucket.label(),
            count,
            f1_sum / *count as f64
        ));
    }
    write_text(&out_dir.join("histogram.csv"), &csv)?;

    let total: usize = histogram.values().map(|(c, _)| *c).sum();
    println!("diagnosed {} map(s) -> {}", total, out_dir.display());
    Ok(())
}
