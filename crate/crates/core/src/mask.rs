//! Per-pixel class labels.

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major class indices of one image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SegMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SegMask {
    pub fn new(height: usize, width: usize) -> Self {
        SegMask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                "SegMask",
                format!("{} labels for {height}x{width}", data.len()),
            ));
        }
        Ok(SegMask { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        SegMask { height, width, data }
    }

    /// Per-pixel argmax over channels of batch item `n`; ties go to the lower class.
    pub fn from_probs<T: Scalar>(probs: &Tensor<T>, n: usize) -> Self {
        let s = probs.shape();
        SegMask::from_fn(s.h, s.w, |r, c| {
            let mut best = 0;
            for k in 1..s.c {
                if probs.at(n, k, r, c) > probs.at(n, best, r, c) {
                    best = k;
                }
            }
            best as u8
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, class: u8) {
        self.data[r * self.width + c] = class;
    }

    /// Pixels per class for classes `0..num_classes`.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &v in &self.data {
            if (v as usize) < num_classes {
                counts[v as usize] += 1;
            }
        }
        counts
    }

    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self.data.iter().find(|&&v| v as usize >= num_classes) {
            Some(v) => Err(Error::Invalid(format!(
                "mask holds class {v}, only {num_classes} classes exist"
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn same_extent(&self, other: &SegMask, op: &'static str) -> Result<()> {
        if self.extent() != other.extent() {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} against {}x{}",
                    self.height, self.width, other.height, other.width
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Shape;

    #[test]
    fn argmax_prefers_lower_class_on_ties() {
        let probs = Tensor::from_fn(Shape::new(1, 3, 1, 3), |_, k, _, c| match (c, k) {
            (0, _) => 1.0 / 3.0,
            (1, 2) => 0.8,
            (1, _) => 0.1,
            (_, 1) => 0.6,
            _ => 0.2,
        });
        let m = SegMask::from_probs::<f64>(&probs, 0);
        assert_eq!(m.data(), &[0, 2, 1]);
    }

    #[test]
    fn class_checks() {
        let m = SegMask::from_vec(1, 3, vec![0, 1, 3]).unwrap();
        assert!(m.check_classes(3).is_err());
        assert_eq!(m.class_counts(3), vec![1, 1, 0]);
        assert!(SegMask::from_vec(2, 2, vec![0; 3]).is_err());
    }
}
