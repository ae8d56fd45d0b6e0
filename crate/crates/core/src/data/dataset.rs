use std::path::{Path, PathBuf};

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::io::raster::{load_image, load_mask, rgb_to_tensor, save_mask, save_rgb, LabelMap};
use crate::mask::SegMask;
use crate::scalar::Scalar;

use super::synth::SynthSample;

/// One image, `1×3×H×W` in `[0, 1]`, with its label mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub name: String,
    pub image: Tensor<T>,
    pub mask: SegMask,
}

impl<T: Scalar> Sample<T> {
    pub fn new(name: impl Into<String>, image: Tensor<T>, mask: SegMask) -> Result<Self> {
        let s = image.shape();
        if s.n != 1 || s.c != 3 || (s.h, s.w) != mask.extent() {
            return Err(Error::shape(
                "sample",
                format!("image {s} with mask {}x{}", mask.height(), mask.width()),
            ));
        }
        Ok(Sample {
            name: name.into(),
            image,
            mask,
        })
    }

    pub fn from_synth(name: impl Into<String>, s: &SynthSample) -> Result<Self> {
        Sample::new(name, rgb_to_tensor(&s.image), s.mask.clone())
    }
}

fn stem(p: &Path) -> Option<String> {
    p.file_stem().and_then(|s| s.to_str()).map(String::from)
}

/// Image files in `dir` sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm" | "ppm" | "pnm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Pairs files of the two directories by file stem. Returns the pairs and
/// the stems present on only one side.
pub fn pair_by_stem(a: &Path, b: &Path) -> Result<(Vec<(PathBuf, PathBuf)>, Vec<String>)> {
    let left = list_images(a)?;
    let right = list_images(b)?;
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for p in &left {
        let s = stem(p).unwrap_or_default();
        match right.iter().find(|q| stem(q).as_deref() == Some(s.as_str())) {
            Some(q) => pairs.push((p.clone(), q.clone())),
            None => unmatched.push(s),
        }
    }
    for q in &right {
        let s = stem(q).unwrap_or_default();
        if !left.iter().any(|p| stem(p).as_deref() == Some(s.as_str())) {
            unmatched.push(s);
        }
    }
    Ok((pairs, unmatched))
}

/// Loads every image of `images` that has a same-stem mask in `masks`.
pub fn load_dir<T: Scalar>(images: &Path, masks: &Path, labels: Option<&LabelMap>) -> Result<Vec<Sample<T>>> {
    let (pairs, unmatched) = pair_by_stem(images, masks)?;
    if !unmatched.is_empty() {
        return Err(Error::Format(format!(
            "unpaired files between {} and {}: {}",
            images.display(),
            masks.display(),
            unmatched.join(", ")
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Format(format!("no images found in {}", images.display())));
    }
    pairs
        .iter()
        .map(|(i, m)| Sample::new(stem(i).unwrap_or_default(), load_image(i)?, load_mask(m, labels)?))
        .collect()
}

/// Writes `images/<name>.png` and `masks/<name>.png` under `out`.
pub fn write_samples(out: &Path, samples: &[SynthSample]) -> Result<Vec<String>> {
    let (img_dir, mask_dir) = (out.join("images"), out.join("masks"));
    for d in [&img_dir, &mask_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let width = samples.len().to_string().len().max(4);
    let mut names = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:0width$}");
        save_rgb(&img_dir.join(format!("{name}.png")), &s.image)?;
        save_mask(&mask_dir.join(format!("{name}.png")), &s.mask)?;
        names.push(name);
    }
    Ok(names)
}
