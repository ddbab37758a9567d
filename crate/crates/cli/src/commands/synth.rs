use std::path::PathBuf;

use clap::Args;

use dmasum::data::{synth_dataset, SynthSpec};
use dmasum::error::{Error, Result};

#[derive(Args)]
pub struct SynthArgs {
    /// Number of videos.
    #[arg(long)]
    videos: usize,
    /// Frame-count range, `MIN:MAX` (or a single value).
    #[arg(long, default_value = "40:80")]
    t: String,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    d: usize,
    /// Annotator count.
    #[arg(long, default_value_t = 5)]
    u: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_range(text: &str) -> Result<(usize, usize)> {
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Input(format!("invalid frame count '{}'", s)))
    };
    match text.split_once(':') {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => {
            let v = parse(text)?;
            Ok((v, v))
        }
    }
}

pub fn run(args: SynthArgs) -> Result<()> {
    let (t_min, t_max) = parse_range(&args.t)?;
    let spec = SynthSpec {
        videos: args.videos,
        t_min,
        t_max,
        dim: args.d,
        annotators: args.u,
        seed: args.seed,
    };
    let manifest = synth_dataset(&spec, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}
