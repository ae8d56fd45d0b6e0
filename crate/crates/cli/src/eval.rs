use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use rganet::data::pair_by_stem;
use rganet::io::kv::parse_extent;
use rganet::io::{load_mask, LabelMap};
use rganet::metrics::{evaluate_pair, mean_metrics, regulator_curve, EmptyPolicy, ImageMetrics};
use rganet::MgridConfig64;

use crate::{io_failure, Failure, Outcome};

pub const CSV_COLUMNS: [&str; 9] = [
    "filename", "accuracy", "precision", "recall", "jaccard", "dice", "mcc", "fbeta", "mgrid",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EmptyMgrid {
    /// Leave images without evidential cells out of the MGRID mean.
    Skip,
    /// Count them as 1.0.
    One,
}

/// Score predicted masks against ground truth, pairing files by stem.
#[derive(Debug, Args)]
#[command(long_about = "Score predicted masks against ground truth, pairing files by stem.\n\n\
    CSV columns: filename, accuracy, precision, recall, jaccard, dice, mcc, fbeta, mgrid. \
    One row per image, then a row named `mean`. The mgrid cell is empty when no grid cell \
    holds a positive pixel in either mask. Files present on one side only are listed on \
    stderr and skipped.")]
pub struct EvalArgs {
    pub pred_dir: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Grid cell HxW.
    #[arg(long, default_value = "12x12")]
    pub cell: String,
    #[arg(long, default_value_t = 0.5)]
    pub fm: f64,
    #[arg(long, default_value_t = 0.525)]
    pub cm: f64,
    #[arg(long, value_enum, default_value_t = EmptyMgrid::Skip)]
    pub mgrid_empty: EmptyMgrid,
    /// Class scored as positive.
    #[arg(long, default_value_t = 2)]
    pub positive: u8,
    /// Gray level to class mapping for ground-truth files, e.g. 0:0,128:1,255:2.
    #[arg(long)]
    pub label_map: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one JSON record per line.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    /// Write the regulator curve as CSV (f, gamma) at 1e-3 steps.
    #[arg(long)]
    pub dump_regulator: Option<PathBuf>,
}

fn record(m: &ImageMetrics) -> Vec<String> {
    let c = &m.classic;
    let mut row = vec![m.name.clone()];
    row.extend([c.accuracy, c.precision, c.recall, c.jaccard, c.dice, c.mcc, m.fbeta].map(|v| v.to_string()));
    row.push(m.mgrid.map(|v| v.to_string()).unwrap_or_default());
    row
}

fn json(m: &ImageMetrics) -> serde_json::Value {
    let c = &m.classic;
    serde_json::json!({
        "filename": m.name,
        "accuracy": c.accuracy,
        "precision": c.precision,
        "recall": c.recall,
        "jaccard": c.jaccard,
        "dice": c.dice,
        "mcc": c.mcc,
        "fbeta": m.fbeta,
        "mgrid": m.mgrid,
    })
}

fn dump_regulator(path: &Path, cfg: &MgridConfig64) -> Outcome {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["f", "gamma"])?;
    for (f, g) in regulator_curve(cfg, 1000) {
        w.write_record([f.to_string(), g.to_string()])?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

pub fn run(args: &EvalArgs) -> Outcome {
    let (ch, cw) = parse_extent(&args.cell).map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = MgridConfig64::new(args.beta, ch, cw, args.fm, args.cm)?;
    if let Some(path) = &args.dump_regulator {
        dump_regulator(path, &cfg)?;
    }
    let (pred_dir, gt_dir) = match (&args.pred_dir, &args.gt_dir) {
        (Some(p), Some(g)) => (p, g),
        (None, None) if args.dump_regulator.is_some() => return Ok(()),
        _ => return Err(Failure::Usage("eval needs PRED_DIR and GT_DIR".into())),
    };
    let labels = args.label_map.as_deref().map(LabelMap::parse).transpose()?;
    let (pairs, unmatched) = pair_by_stem(pred_dir, gt_dir)?;
    for name in &unmatched {
        eprintln!("warning: {name} has no counterpart, skipped");
    }
    if pairs.is_empty() {
        return Err(Failure::Data(format!(
            "no matching files between {} and {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    let rows = pairs
        .par_iter()
        .map(|(p, g)| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let pred = load_mask(p, None)?;
            let gt = load_mask(g, labels.as_ref())?;
            evaluate_pair(name, &pred, &gt, args.positive, &cfg)
        })
        .collect::<rganet::Result<Vec<_>>>()?;
    let policy = match args.mgrid_empty {
        EmptyMgrid::Skip => EmptyPolicy::Skip,
        EmptyMgrid::One => EmptyPolicy::CountAsOne,
    };
    let mean = mean_metrics(&rows, policy);

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_COLUMNS)?;
    for m in rows.iter().chain(std::iter::once(&mean)) {
        w.write_record(record(m))?;
    }
    w.flush().map_err(|e| Failure::Data(format!("writing CSV: {e}")))?;

    if let Some(path) = &args.jsonl {
        let mut out = BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?);
        for m in rows.iter().chain(std::iter::once(&mean)) {
            writeln!(out, "{}", json(m)).map_err(|e| io_failure(path, e))?;
        }
        out.flush().map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}
