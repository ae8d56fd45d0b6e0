use std::path::PathBuf;

use clap::Args;
use rganet::data::{synth_dataset, write_samples, SynthSpec};
use rganet::io::kv::parse_extent;

use crate::{Failure, Outcome};

/// Render a synthetic image/mask set into OUT/images and OUT/masks.
#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    /// HxW
    #[arg(long, default_value = "48x64")]
    pub size: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Object count range, MIN,MAX.
    #[arg(long, default_value = "1,3", value_parser = pair::<usize>)]
    pub objects: (usize, usize),
    /// Class-2 area fraction range, MIN,MAX.
    #[arg(long, default_value = "0.1,0.3", value_parser = pair::<f64>)]
    pub coverage: (f64, f64),
    /// Border ring width in pixels.
    #[arg(long, default_value_t = 2)]
    pub border: usize,
}

fn pair<V: std::str::FromStr>(s: &str) -> Result<(V, V), String> {
    let parse = |v: &str| v.trim().parse::<V>().map_err(|_| format!("cannot parse {v:?}"));
    match s.split_once(',') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Err(format!("expected MIN,MAX, got {s:?}")),
    }
}

pub fn run(args: &SynthArgs) -> Outcome {
    let (height, width) = parse_extent(&args.size).map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = SynthSpec {
        count: args.count,
        height,
        width,
        objects: args.objects,
        coverage: args.coverage,
        border: args.border,
    };
    let samples = synth_dataset(&spec, args.seed)?;
    let names = write_samples(&args.out, &samples)?;
    eprintln!("wrote {} pairs to {}", names.len(), args.out.display());
    Ok(())
}
