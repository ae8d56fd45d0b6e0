//! Masks as 8-bit single-channel PNG or PGM holding literal class indices,
//! and RGB images normalized to `[0, 1]`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::engine::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::mask::SegMask;
use crate::scalar::Scalar;

/// Gray level to class index for label files that do not store classes directly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    table: [Option<u8>; 256],
}

impl LabelMap {
    /// Parses `level:class` pairs separated by commas, e.g. `0:0,128:1,255:2`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = [None; 256];
        for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (level, class) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("label map entry {pair:?} is not level:class")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u8>()
                    .map_err(|e| Error::Config(format!("label map entry {pair:?}: {e}")))
            };
            let level = parse(level)?;
            if table[level as usize].replace(parse(class)?).is_some() {
                return Err(Error::Config(format!("gray level {level} mapped twice")));
            }
        }
        Ok(LabelMap { table })
    }

    pub fn apply(&self, level: u8) -> Option<u8> {
        self.table[level as usize]
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn format_for(path: &Path) -> ImageFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") | Some("pnm") | Some("ppm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    }
}

fn save(img: DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, format_for(path)).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_mask(path: &Path, mask: &SegMask) -> Result<()> {
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.data().to_vec())
        .expect("buffer matches extent");
    save(DynamicImage::ImageLuma8(img), path)
}

/// Reads a single-channel 8-bit mask, translating gray levels through
/// `labels` when given.
pub fn load_mask(path: &Path, labels: Option<&LabelMap>) -> Result<SegMask> {
    let img = match open(path)? {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Format(format!(
                "{}: mask must be 8-bit single-channel, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    let mut data = img.into_raw();
    if let Some(map) = labels {
        for v in &mut data {
            *v = map.apply(*v).ok_or_else(|| {
                Error::Format(format!("{}: gray level {v} has no class in the label map", path.display()))
            })?;
        }
    }
    SegMask::from_vec(h as usize, w as usize, data)
}

/// `1×3×H×W` tensor with channel values in `[0, 1]`.
pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let rgb = open(path)?.into_rgb8();
    Ok(rgb_to_tensor(&rgb))
}

pub fn rgb_to_tensor<T: Scalar>(rgb: &RgbImage) -> Tensor<T> {
    let (w, h) = rgb.dimensions();
    let scale = T::lit(1.0 / 255.0);
    Tensor::from_fn(Shape::new(1, 3, h as usize, w as usize), |_, c, r, x| {
        T::lit(rgb.get_pixel(x as u32, r as u32).0[c] as f64) * scale
    })
}

pub fn tensor_to_rgb<T: Scalar>(image: &Tensor<T>, n: usize) -> RgbImage {
    let s = image.shape();
    RgbImage::from_fn(s.w as u32, s.h as u32, |x, r| {
        let px = |c: usize| {
            let v = image.at(n, c.min(s.c - 1), r as usize, x as usize).as_f64();
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn save_rgb(path: &Path, rgb: &RgbImage) -> Result<()> {
    save(DynamicImage::ImageRgb8(rgb.clone()), path)
}

/// One class channel of a probability map as an 8-bit gray raster.
pub fn save_probability<T: Scalar>(path: &Path, probs: &Tensor<T>, n: usize, class: usize) -> Result<()> {
    let s = probs.shape();
    let img = GrayImage::from_fn(s.w as u32, s.h as u32, |x, r| {
        let v = probs.at(n, class, r as usize, x as usize).as_f64();
        image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    save(DynamicImage::ImageLuma8(img), path)
}
