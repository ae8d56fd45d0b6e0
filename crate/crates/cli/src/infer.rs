use std::path::{Path, PathBuf};

use rganet::io::{load_image, save_mask, save_probability};
use rganet::{Mode, Model32, SegMask};

use crate::{Failure, Outcome};

/// `dir/stem_p{class}.png` beside the mask file.
fn probability_path(out: &Path, class: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("mask");
    out.with_file_name(format!("{stem}_p{class}.png"))
}

pub fn run(checkpoint: &Path, image: &Path, out: &Path, probs: bool) -> Outcome {
    let mut model = Model32::load(checkpoint)?;
    let x = load_image::<f32>(image)?;
    let (h, w) = model.config().input_size;
    let s = x.shape();
    if (s.h, s.w) != (h, w) {
        return Err(Failure::Data(format!(
            "{} is {}x{}, checkpoint expects {h}x{w}",
            image.display(),
            s.h,
            s.w
        )));
    }
    let p = model.forward(&x, Mode::Eval)?;
    save_mask(out, &SegMask::from_probs(&p, 0))?;
    if probs {
        for class in 0..p.shape().c {
            save_probability(&probability_path(out, class), &p, 0, class)?;
        }
    }
    Ok(())
}
