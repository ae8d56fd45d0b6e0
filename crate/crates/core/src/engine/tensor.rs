use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Extents of a rank-4 NCHW tensor.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }

    /// Pads natural dims on the left with ones (`[C]` becomes `1×1×1×C`).
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        if dims.len() > 4 {
            return Err(Error::shape(
                "shape",
                format!("rank {} exceeds 4", dims.len()),
            ));
        }
        let mut d = [1usize; 4];
        d[4 - dims.len()..].copy_from_slice(dims);
        Ok(Shape::new(d[0], d[1], d[2], d[3]))
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements per batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub const fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Dense row-major NCHW array.
///
/// Tensors produced on a dry-run tape carry a shape but no data; see
/// [`Tape::dry`](super::Tape::dry).
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(
                "tensor",
                format!(
                    "{} values supplied for shape {shape} ({} expected)",
                    data.len(),
                    shape.numel()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub(crate) fn placeholder(shape: Shape) -> Self {
        Tensor {
            shape,
            data: Vec::new(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn is_placeholder(&self) -> bool {
        self.data.is_empty() && self.shape.numel() != 0
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        let o = self.shape.offset(n, c, h, w);
        &mut self.data[o]
    }

    /// Same data under different extents with equal element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{} to {shape}", self.shape),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Item `n` of the batch as a contiguous slice.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// Batch of `count` items taken from `self` starting at `start`.
    pub fn batch_slice(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.shape.n {
            return Err(Error::shape(
                "batch_slice",
                format!("items {start}..{} of {}", start + count, self.shape.n),
            ));
        }
        let len = self.shape.item();
        Ok(Tensor {
            shape: Shape::new(count, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[start * len..(start + count) * len].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Invalid("cannot stack zero tensors".into()))?
            .shape;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        let mut n = 0;
        for t in items {
            if (t.shape.c, t.shape.h, t.shape.w) != (first.c, first.h, first.w) {
                return Err(Error::shape(
                    "stack",
                    format!("{} vs {}", t.shape, first),
                ));
            }
            n += t.shape.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(n, first.c, first.h, first.w),
            data,
        })
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor({:?}, ", self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, "{:?})", self.data)
        } else {
            write!(f, "{:?} ..)", &self.data[..SHOWN])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 7]).is_err());
        let t = Tensor::<f32>::from_vec(Shape::new(1, 2, 2, 2), vec![0.0; 8]).unwrap();
        assert_eq!(t.numel(), 8);
    }

    #[test]
    fn dims_pad_left() {
        assert_eq!(Shape::from_dims(&[5]).unwrap(), Shape::new(1, 1, 1, 5));
        assert_eq!(Shape::from_dims(&[3, 4]).unwrap(), Shape::new(1, 1, 3, 4));
        assert!(Shape::from_dims(&[1, 2, 3, 4, 5]).is_err());
    }

    #[test]
    fn offsets_are_row_major() {
        let s = Shape::new(2, 3, 4, 5);
        assert_eq!(s.offset(1, 2, 3, 4), s.numel() - 1);
        assert_eq!(s.offset(0, 0, 1, 0), 5);
    }
}
