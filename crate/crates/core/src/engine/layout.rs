//! Data-movement ops: axis permutation, channel concatenation and nearest 2× upsampling.

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn permute_shape(s: Shape, perm: [usize; 4]) -> Result<Shape> {
    let mut seen = [false; 4];
    for &p in &perm {
        if p > 3 || seen[p] {
            return Err(Error::Invalid(format!("{perm:?} is not a permutation of 0..4")));
        }
        seen[p] = true;
    }
    let d = s.dims();
    Ok(Shape::new(d[perm[0]], d[perm[1]], d[perm[2]], d[perm[3]]))
}

pub fn inverse_perm(perm: [usize; 4]) -> [usize; 4] {
    let mut inv = [0; 4];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// `out[i0,i1,i2,i3] = x[j]` where `j[perm[a]] = i[a]`.
pub fn permute<T: Scalar>(x: &Tensor<T>, perm: [usize; 4]) -> Tensor<T> {
    let s = x.shape();
    let out_shape = permute_shape(s, perm).expect("validated permutation");
    let d = s.dims();
    let strides = [d[1] * d[2] * d[3], d[2] * d[3], d[3], 1];
    let st = [strides[perm[0]], strides[perm[1]], strides[perm[2]], strides[perm[3]]];
    let od = out_shape.dims();
    let mut data = Vec::with_capacity(s.numel());
    for a in 0..od[0] {
        for b in 0..od[1] {
            for c in 0..od[2] {
                let base = a * st[0] + b * st[1] + c * st[2];
                for e in 0..od[3] {
                    data.push(x.data()[base + e * st[3]]);
                }
            }
        }
    }
    Tensor::from_vec(out_shape, data).expect("permutation preserves length")
}

pub fn concat_shape(shapes: &[Shape]) -> Result<Shape> {
    let first = *shapes
        .first()
        .ok_or_else(|| Error::Invalid("concat of zero tensors".into()))?;
    let mut c = 0;
    for s in shapes {
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape(
                "concat_channels",
                format!("{s} does not match {first} outside the channel axis"),
            ));
        }
        c += s.c;
    }
    Ok(Shape::new(first.n, c, first.h, first.w))
}

pub fn concat_channels<T: Scalar>(xs: &[&Tensor<T>]) -> Tensor<T> {
    let shapes: Vec<Shape> = xs.iter().map(|t| t.shape()).collect();
    let out_shape = concat_shape(&shapes).expect("validated concat");
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..out_shape.n {
        for t in xs {
            data.extend_from_slice(t.item(n));
        }
    }
    Tensor::from_vec(out_shape, data).expect("concat length")
}

/// Splits a channel gradient back into the concatenated parts.
pub fn split_channels<T: Scalar>(g: &Tensor<T>, parts: &[Shape]) -> Vec<Tensor<T>> {
    let gs = g.shape();
    let mut out: Vec<Vec<T>> = parts.iter().map(|s| Vec::with_capacity(s.numel())).collect();
    for n in 0..gs.n {
        let item = g.item(n);
        let mut off = 0;
        for (buf, s) in out.iter_mut().zip(parts) {
            let len = s.item();
            buf.extend_from_slice(&item[off..off + len]);
            off += len;
        }
    }
    out.into_iter()
        .zip(parts)
        .map(|(d, &s)| Tensor::from_vec(s, d).expect("split length"))
        .collect()
}

pub fn upsample2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let os = Shape::new(s.n, s.c, 2 * s.h, 2 * s.w);
    let mut data = Vec::with_capacity(os.numel());
    for plane in x.data().chunks(s.plane().max(1)) {
        for row in plane.chunks(s.w.max(1)) {
            for _ in 0..2 {
                for &v in row {
                    data.push(v);
                    data.push(v);
                }
            }
        }
    }
    Tensor::from_vec(os, data).expect("upsample length")
}

/// Sums each 2×2 output block of the gradient back onto its source pixel.
pub fn upsample2x_backward<T: Scalar>(g: &Tensor<T>, in_shape: Shape) -> Tensor<T> {
    Tensor::from_fn(in_shape, |n, c, y, x| {
        g.at(n, c, 2 * y, 2 * x)
            + g.at(n, c, 2 * y, 2 * x + 1)
            + g.at(n, c, 2 * y + 1, 2 * x)
            + g.at(n, c, 2 * y + 1, 2 * x + 1)
    })
}

/// Top-left `h`×`w` window of every plane.
pub fn crop<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let s = x.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, q| x.at(n, c, y, q))
}

/// Zero-pads a cropped gradient back to `in_shape`.
pub fn crop_backward<T: Scalar>(g: &Tensor<T>, in_shape: Shape) -> Tensor<T> {
    let gs = g.shape();
    Tensor::from_fn(in_shape, |n, c, y, q| {
        if y < gs.h && q < gs.w {
            g.at(n, c, y, q)
        } else {
            T::zero()
        }
    })
}
