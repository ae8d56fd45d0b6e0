//! Random rectangles and ellipses on textured backgrounds. Object interiors
//! are class 2, a border ring of the same color is class 1, the rest class 0.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::SegMask;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of objects per image.
    pub objects: (usize, usize),
    /// Range of the class-2 pixel fraction.
    pub coverage: (f64, f64),
    /// Border ring width in pixels.
    pub border: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            count: 4,
            height: 48,
            width: 64,
            objects: (1, 3),
            coverage: (0.1, 0.3),
            border: 2,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.height == 0 || self.width == 0 {
            bad.push("extent must be positive".to_string());
        }
        if self.objects.0 > self.objects.1 {
            bad.push(format!("object range {:?} is reversed", self.objects));
        }
        let (lo, hi) = self.coverage;
        if !(0.0..1.0).contains(&lo) || !(lo..1.0).contains(&hi) {
            bad.push(format!("coverage range ({lo}, {hi}) must satisfy 0 ≤ lo ≤ hi < 1"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synth spec: {}", bad.join("; "))))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub image: RgbImage,
    pub mask: SegMask,
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Rect,
    Ellipse,
}

#[derive(Clone, Copy, Debug)]
struct Object {
    kind: Kind,
    /// Interior box: top, left, height, width.
    top: isize,
    left: isize,
    h: usize,
    w: usize,
    color: [u8; 3],
}

impl Object {
    /// Class at pixel `(r, c)` with a `border`-pixel ring around the interior.
    fn class_at(&self, r: isize, c: isize, border: usize) -> Option<u8> {
        let b = border as f64;
        match self.kind {
            Kind::Rect => {
                let inside = |pad: isize| {
                    r >= self.top - pad
                        && r < self.top + self.h as isize + pad
                        && c >= self.left - pad
                        && c < self.left + self.w as isize + pad
                };
                if inside(0) {
                    Some(2)
                } else if inside(border as isize) {
                    Some(1)
                } else {
                    None
                }
            }
            Kind::Ellipse => {
                let (a, bb) = (self.h as f64 / 2.0, self.w as f64 / 2.0);
                let cy = self.top as f64 + a - 0.5;
                let cx = self.left as f64 + bb - 0.5;
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let norm = |ra: f64, rb: f64| (dy / ra).powi(2) + (dx / rb).powi(2);
                if norm(a, bb) <= 1.0 {
                    Some(2)
                } else if norm(a + b, bb + b) <= 1.0 {
                    Some(1)
                } else {
                    None
                }
            }
        }
    }
}

fn background(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    let base: [f64; 3] = [rng.gen_range(20.0..90.0), rng.gen_range(20.0..90.0), rng.gen_range(20.0..90.0)];
    let fy = rng.gen_range(0.1..0.6);
    let fx = rng.gen_range(0.1..0.6);
    let amp = rng.gen_range(5.0..20.0);
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let wave = amp * ((r as f64 * fy).sin() + (c as f64 * fx).cos());
            let mut px = [0u8; 3];
            for (k, v) in px.iter_mut().enumerate() {
                let noise = rng.gen_range(-8.0..8.0);
                *v = (base[k] + wave + noise).clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(c as u32, r as u32, Rgb(px));
        }
    }
    img
}

fn place(rng: &mut ChaCha8Rng, spec: &SynthSpec, occupied: &[bool], area: f64) -> Option<Object> {
    let (h, w) = (spec.height as isize, spec.width as isize);
    let b = spec.border as isize;
    let kind = if rng.gen_bool(0.5) { Kind::Rect } else { Kind::Ellipse };
    let shape_area = match kind {
        Kind::Rect => area,
        Kind::Ellipse => area * 4.0 / std::f64::consts::PI,
    };
    let mut scale = 1.0;
    for attempt in 0..400 {
        if attempt % 40 == 39 {
            scale *= 0.85;
        }
        let aspect = rng.gen_range(0.6..1.6);
        let oh = ((shape_area * scale * aspect).sqrt().round() as isize).max(1);
        let ow = ((shape_area * scale / aspect).sqrt().round() as isize).max(1);
        if oh + 2 * b + 2 > h || ow + 2 * b + 2 > w {
            continue;
        }
        let top = rng.gen_range(b + 1..=h - oh - b - 1);
        let left = rng.gen_range(b + 1..=w - ow - b - 1);
        let free = (top - b - 1..top + oh + b + 1)
            .all(|r| (left - b - 1..left + ow + b + 1).all(|c| !occupied[(r * w + c) as usize]));
        if free {
            let color = [rng.gen_range(140..=255), rng.gen_range(100..=255), rng.gen_range(100..=255)];
            return Some(Object {
                kind,
                top,
                left,
                h: oh as usize,
                w: ow as usize,
                color,
            });
        }
    }
    None
}

/// Renders one sample; `rng` fully determines the output.
pub fn render(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> SynthSample {
    let (h, w) = (spec.height, spec.width);
    let mut image = background(rng, h, w);
    let mut mask = SegMask::new(h, w);
    let mut occupied = vec![false; h * w];
    let count = rng.gen_range(spec.objects.0..=spec.objects.1);
    if count == 0 {
        return SynthSample { image, mask };
    }
    let coverage = rng.gen_range(spec.coverage.0..=spec.coverage.1);
    let area = coverage * (h * w) as f64 / count as f64;
    for _ in 0..count {
        let Some(obj) = place(rng, spec, &occupied, area) else {
            continue;
        };
        let b = spec.border as isize;
        for r in (obj.top - b).max(0)..(obj.top + obj.h as isize + b).min(h as isize) {
            for c in (obj.left - b).max(0)..(obj.left + obj.w as isize + b).min(w as isize) {
                if let Some(class) = obj.class_at(r, c, spec.border) {
                    let (ru, cu) = (r as usize, c as usize);
                    mask.set(ru, cu, class);
                    image.put_pixel(cu as u32, ru as u32, Rgb(obj.color));
                }
            }
        }
        let pad = b + 1;
        for r in (obj.top - pad).max(0)..(obj.top + obj.h as isize + pad).min(h as isize) {
            for c in (obj.left - pad).max(0)..(obj.left + obj.w as isize + pad).min(w as isize) {
                occupied[r as usize * w + c as usize] = true;
            }
        }
    }
    SynthSample { image, mask }
}

/// `spec.count` samples from one seeded stream.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.count).map(|_| render(spec, &mut rng)).collect())
}
