use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use dmasum::checkpoint::load_checkpoint;
use dmasum::error::Result;
use dmasum::eval::{
    correlation_curve, rank_correlation_protocol, write_curve_csv, write_curve_svg, EvalReport,
    PerVideoMetrics, SkippedAnnotators,
};
use dmasum::model::DmaSumModel;

use crate::runner::{
    aggregation_for, fold_dir, load_corpus, predict_scores, safe_name, summarize_scores, video_f1,
};

use super::{apply_eval_overrides, ensure_dir, out_or_run, read_plan, read_run_config, write_text};

#[derive(Args)]
pub struct EvalArgs {
    /// A directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Optional config file whose `eval` section overrides the run's
    /// evaluation options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (defaults to the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the mean annotator scores as the prediction instead of the model
    /// (protocol self-consistency check).
    #[arg(long)]
    inject_oracle: bool,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut config = read_run_config(&args.run)?;
    apply_eval_overrides(&mut config, args.config.as_deref())?;
    let plan = read_plan(&args.run)?;
    let (corpus, target, _) = load_corpus(&config)?;
    let agg = aggregation_for(&config, corpus.dataset(&target)?);

    let out_dir = out_or_run(args.out, &args.run);
    let curves_dir = out_dir.join("curves");
    ensure_dir(&curves_dir)?;

    let mut per_video = BTreeMap::new();
    let mut skipped = SkippedAnnotators::default();
    for (fold, fold_spec) in plan.folds.iter().enumerate() {
        let checkpoint = load_checkpoint(&fold_dir(&args.run, fold).join("checkpoint.bin"))?;
        let model = DmaSumModel::new(checkpoint.config.clone())?;
        for id in &fold_spec.test {
            let video = corpus.video(id)?;
            let scores = if args.inject_oracle {
                video.annotations.mean_scores().to_vec()
            } else {
                predict_scores(&model, &checkpoint.params, video)?
            };
            let (_, summary) = summarize_scores(&config, video.features.matrix(), &scores)?;
            let f1 = video_f1(&summary, video, agg)?;
            let protocol = rank_correlation_protocol(&scores, &video.annotations)?;
            skipped.tau += protocol.tau_skipped;
            skipped.rho += protocol.rho_skipped;

            let curve = correlation_curve(&scores, &video.annotations, config.eval.curve_samples)?;
            write_curve_csv(&curves_dir.join(format!("{}.csv", safe_name(id))), &curve)?;
            write_curve_svg(&curves_dir.join(format!("{}.svg", safe_name(id))), &curve)?;

            per_video.insert(
                id.clone(),
                PerVideoMetrics {
                    f1,
                    tau: protocol.tau,
                    rho: protocol.rho,
                },
            );
        }
    }

    let echo = serde_json::json!({
        "run": config.echo()?,
        "inject_oracle": args.inject_oracle,
    });
    let report = EvalReport::assemble(per_video, agg, skipped, echo)?.with_reference(&target);
    write_text(
        &out_dir.join("report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;

    println!(
        "evaluated {} video(s): F1 {:.2}% tau {} rho {} -> {}",
        report.per_video.len(),
        report.aggregate.f1,
        report
            .aggregate
            .tau
            .map_or("n/a".to_string(), |v| format!("{:.4}", v)),
        report
            .aggregate
            .rho
            .map_or("n/a".to_string(), |v| format!("{:.4}", v)),
        out_dir.join("report.json").display()
    );
    Ok(())
}
