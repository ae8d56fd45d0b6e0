//! Long-kernel depth-wise convolution and the per-slice outer product.
//!
//! A tensor `N×D×R×S` is read as `N·D` matrices of `R×S`. Slice `d` owns one
//! kernel that spans a whole axis, so the valid convolution collapses that axis
//! to extent 1. Kernels are shared across the batch.

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis that a long kernel spans and collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Collapse {
    /// Kernel length `R`; output `N×D×1×S`.
    Rows,
    /// Kernel length `S`; output `N×D×R×1`.
    Cols,
}

/// Validates kernels stored as `1×1×D×L` and returns the output shape.
pub fn long_conv_shape(x: Shape, kernels: Shape, axis: Collapse) -> Result<Shape> {
    if kernels.n != 1 || kernels.c != 1 {
        return Err(Error::shape(
            "depthwise_long_conv",
            format!("kernels must be stored as 1x1xDxL, got {kernels}"),
        ));
    }
    if kernels.h != x.c {
        return Err(Error::shape(
            "depthwise_long_conv",
            format!("{} kernels for {} depth slices", kernels.h, x.c),
        ));
    }
    let (span, out) = match axis {
        Collapse::Cols => (x.w, Shape::new(x.n, x.c, x.h, 1)),
        Collapse::Rows => (x.h, Shape::new(x.n, x.c, 1, x.w)),
    };
    if kernels.w != span {
        return Err(Error::shape(
            "depthwise_long_conv",
            format!("kernel length {} does not span axis of extent {span}", kernels.w),
        ));
    }
    Ok(out)
}

pub fn long_conv_forward<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>, axis: Collapse) -> Tensor<T> {
    let s = x.shape();
    let len = k.shape().w;
    match axis {
        Collapse::Cols => Tensor::from_fn(Shape::new(s.n, s.c, s.h, 1), |n, d, r, _| {
            let row = &x.data()[s.offset(n, d, r, 0)..s.offset(n, d, r, 0) + s.w];
            let kern = &k.data()[d * len..(d + 1) * len];
            row.iter().zip(kern).map(|(&a, &b)| a * b).sum()
        }),
        Collapse::Rows => {
            let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, s.w));
            for n in 0..s.n {
                for d in 0..s.c {
                    let kern = &k.data()[d * len..(d + 1) * len];
                    let dst_off = (n * s.c + d) * s.w;
                    for (r, &kv) in kern.iter().enumerate() {
                        let base = s.offset(n, d, r, 0);
                        let row = &x.data()[base..base + s.w];
                        let dst = &mut out.data_mut()[dst_off..dst_off + s.w];
                        for (o, &v) in dst.iter_mut().zip(row) {
                            *o += kv * v;
                        }
                    }
                }
            }
            out
        }
    }
}

/// Returns `(dx, dkernels)`.
pub fn long_conv_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    axis: Collapse,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let s = x.shape();
    let len = k.shape().w;
    let mut dx = Tensor::zeros(s);
    let mut dk = Tensor::zeros(k.shape());
    for n in 0..s.n {
        for d in 0..s.c {
            let kern = &k.data()[d * len..(d + 1) * len];
            for r in 0..s.h {
                let base = s.offset(n, d, r, 0);
                for c in 0..s.w {
                    let (g, ki) = match axis {
                        Collapse::Cols => (gout.data()[(n * s.c + d) * s.h + r], c),
                        Collapse::Rows => (gout.data()[(n * s.c + d) * s.w + c], r),
                    };
                    dx.data_mut()[base + c] = g * kern[ki];
                    dk.data_mut()[d * len + ki] += g * x.data()[base + c];
                }
            }
        }
    }
    (dx, dk)
}

pub fn slice_outer_shape(cols: Shape, rows: Shape) -> Result<Shape> {
    if cols.w != 1 || rows.h != 1 {
        return Err(Error::shape(
            "slice_outer_product",
            format!("expected N×D×R×1 and N×D×1×S, got {cols} and {rows}"),
        ));
    }
    if cols.n != rows.n || cols.c != rows.c {
        return Err(Error::shape(
            "slice_outer_product",
            format!("depth mismatch between {cols} and {rows}"),
        ));
    }
    Ok(Shape::new(cols.n, cols.c, cols.h, rows.w))
}

pub fn slice_outer_forward<T: Scalar>(cols: &Tensor<T>, rows: &Tensor<T>) -> Tensor<T> {
    let (cs, rs) = (cols.shape(), rows.shape());
    let (r_len, s_len) = (cs.h, rs.w);
    let mut out = Tensor::zeros(Shape::new(cs.n, cs.c, r_len, s_len));
    for nd in 0..cs.n * cs.c {
        let cv = &cols.data()[nd * r_len..(nd + 1) * r_len];
        let rv = &rows.data()[nd * s_len..(nd + 1) * s_len];
        let dst = &mut out.data_mut()[nd * r_len * s_len..(nd + 1) * r_len * s_len];
        for (r, &a) in cv.iter().enumerate() {
            for (o, &b) in dst[r * s_len..(r + 1) * s_len].iter_mut().zip(rv) {
                *o = a * b;
            }
        }
    }
    out
}

/// Returns `(dcols, drows)`.
pub fn slice_outer_backward<T: Scalar>(
    cols: &Tensor<T>,
    rows: &Tensor<T>,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (cs, rs) = (cols.shape(), rows.shape());
    let (r_len, s_len) = (cs.h, rs.w);
    let mut dc = Tensor::zeros(cs);
    let mut dr = Tensor::zeros(rs);
    for nd in 0..cs.n * cs.c {
        let cv = &cols.data()[nd * r_len..(nd + 1) * r_len];
        let rv = &rows.data()[nd * s_len..(nd + 1) * s_len];
        let g = &gout.data()[nd * r_len * s_len..(nd + 1) * r_len * s_len];
        for r in 0..r_len {
            let grow = &g[r * s_len..(r + 1) * s_len];
            dc.data_mut()[nd * r_len + r] = grow.iter().zip(rv).map(|(&a, &b)| a * b).sum();
            let drv = &mut dr.data_mut()[nd * s_len..(nd + 1) * s_len];
            for (o, &gv) in drv.iter_mut().zip(grow) {
                *o += gv * cv[r];
            }
        }
    }
    (dc, dr)
}
