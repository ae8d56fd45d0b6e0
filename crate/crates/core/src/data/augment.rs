//! Lossless spatial augmentations applied identically to image and mask.

use rand::Rng;

use crate::engine::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::mask::SegMask;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Augment {
    HFlip,
    /// Translation by up to an eighth of each extent; vacated pixels are
    /// zero in the image and class 0 in the mask.
    Shift,
    /// Quarter turn for square inputs, half turn otherwise.
    Rotate90,
}

impl std::str::FromStr for Augment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hflip" => Ok(Augment::HFlip),
            "shift" => Ok(Augment::Shift),
            "rotate90" => Ok(Augment::Rotate90),
            other => Err(Error::Config(format!(
                "unknown augmentation {other:?}, expected hflip, shift or rotate90"
            ))),
        }
    }
}

/// Pixel mapping shared by both rasters: output `(r, c)` reads input
/// `source(r, c)`, or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    HFlip,
    Shift { dy: isize, dx: isize },
    Rot90,
    Rot180,
}

impl Transform {
    fn source(self, r: usize, c: usize, h: usize, w: usize) -> Option<(usize, usize)> {
        match self {
            Transform::HFlip => Some((r, w - 1 - c)),
            Transform::Shift { dy, dx } => {
                let (sr, sc) = (r as isize - dy, c as isize - dx);
                (sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w).then_some((sr as usize, sc as usize))
            }
            // Counter-clockwise quarter turn on a square raster.
            Transform::Rot90 => Some((c, w - 1 - r)),
            Transform::Rot180 => Some((h - 1 - r, w - 1 - c)),
        }
    }

    pub fn apply_image<T: Scalar>(self, image: &Tensor<T>) -> Tensor<T> {
        let s = image.shape();
        Tensor::from_fn(s, |n, ch, r, c| match self.source(r, c, s.h, s.w) {
            Some((sr, sc)) => image.at(n, ch, sr, sc),
            None => T::zero(),
        })
    }

    pub fn apply_mask(self, mask: &SegMask) -> SegMask {
        let (h, w) = mask.extent();
        SegMask::from_fn(h, w, |r, c| match self.source(r, c, h, w) {
            Some((sr, sc)) => mask.get(sr, sc),
            None => 0,
        })
    }
}

/// Draws the transforms for one sample: each enabled augmentation fires with
/// probability one half, in the order given.
pub fn draw<R: Rng>(augs: &[Augment], shape: Shape, rng: &mut R) -> Vec<Transform> {
    let mut out = Vec::new();
    for &a in augs {
        if !rng.gen_bool(0.5) {
            continue;
        }
        out.push(match a {
            Augment::HFlip => Transform::HFlip,
            Augment::Shift => {
                let my = (shape.h / 8) as isize;
                let mx = (shape.w / 8) as isize;
                Transform::Shift {
                    dy: rng.gen_range(-my..=my),
                    dx: rng.gen_range(-mx..=mx),
                }
            }
            Augment::Rotate90 if shape.h == shape.w => Transform::Rot90,
            Augment::Rotate90 => Transform::Rot180,
        });
    }
    out
}

pub fn apply<T: Scalar>(transforms: &[Transform], image: &Tensor<T>, mask: &SegMask) -> (Tensor<T>, SegMask) {
    let mut img = image.clone();
    let mut m = mask.clone();
    for &t in transforms {
        img = t.apply_image(&img);
        m = t.apply_mask(&m);
    }
    (img, m)
}
