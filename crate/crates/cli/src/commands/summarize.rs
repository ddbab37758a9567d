use std::path::PathBuf;

use clap::Args;

use dmasum::checkpoint::load_checkpoint;
use dmasum::error::Result;
use dmasum::model::DmaSumModel;

use crate::runner::{fold_dir, load_corpus, predict_scores, safe_name, summarize_scores};

use super::{apply_eval_overrides, ensure_dir, out_or_run, read_plan, read_run_config, write_text};

#[derive(Args)]
pub struct SummarizeArgs {
    /// A directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Optional config file whose `eval` section overrides the run's
    /// evaluation options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: SummarizeArgs) -> Result<()> {
    let mut config = read_run_config(&args.run)?;
    apply_eval_overrides(&mut config, args.config.as_deref())?;
    let plan = read_plan(&args.run)?;
    let (corpus, _, _) = load_corpus(&config)?;

    let out_dir = out_or_run(args.out, &args.run).join("summaries");
    ensure_dir(&out_dir)?;

    let mut written = 0usize;
    for (fold, fold_spec) in plan.folds.iter().enumerate() {
        let checkpoint = load_checkpoint(&fold_dir(&args.run, fold).join("checkpoint.bin"))?;
        let model = DmaSumModel::new(checkpoint.config.clone())?;
        for id in &fold_spec.test {
            let video = corpus.video(id)?;
            let scores = predict_scores(&model, &checkpoint.params, video)?;
            let (segments, summary) = summarize_scores(&config, video.features.matrix(), &scores)?;

            let mut csv = String::from("frame,score,segment_id,selected\n");
            for (frame, score) in scores.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    frame,
                    score,
                    segments.segment_of(frame).expect("frame within video"),
                    u8::from(summary.selected()[frame]),
                ));
            }
            write_text(&out_dir.join(format!("{}.csv", safe_name(id))), &csv)?;
            written += 1;
        }
    }

    println!("wrote {} summary file(s) -> {}", written, out_dir.display());
    Ok(())
}
