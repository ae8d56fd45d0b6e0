//! Dense 2-D cross-correlation and the 2×2 stride-2 transposed convolution.

use rayon::prelude::*;

use super::linalg::{matmul_abt_acc, matmul_acc, matmul_atb_acc};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Resolved geometry of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub ci: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: Shape, kernel: Shape, stride: usize, pad: usize) -> Result<Self> {
        if x.numel() == 0 {
            return Err(Error::shape("conv2d", format!("zero-extent input {x}")));
        }
        if kernel.numel() == 0 {
            return Err(Error::shape("conv2d", format!("zero-extent kernel {kernel}")));
        }
        if !(1..=2).contains(&stride) {
            return Err(Error::Invalid(format!("conv2d stride {stride} not in {{1, 2}}")));
        }
        if kernel.c != x.c {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "kernel expects {} input channels, input {x} has {}",
                    kernel.c, x.c
                ),
            ));
        }
        let (kh, kw) = (kernel.h, kernel.w);
        if x.h + 2 * pad < kh || x.w + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {x} (pad {pad})"),
            ));
        }
        Ok(ConvGeom {
            n: x.n,
            ci: x.c,
            co: kernel.n,
            kh,
            kw,
            stride,
            pad,
            h: x.h,
            w: x.w,
            ho: (x.h + 2 * pad - kh) / stride + 1,
            wo: (x.w + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> Shape {
        Shape::new(self.n, self.co, self.ho, self.wo)
    }

    /// Pointwise convolutions read the input planes directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    /// Multiply-accumulate count of the forward pass.
    pub fn macs(&self) -> u64 {
        (self.n * self.co * self.out_plane() * self.patch()) as u64
    }

    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let (p, plane) = (self.out_plane(), self.h * self.w);
        for c in 0..self.ci {
            let src = &x[c * plane..(c + 1) * plane];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let srow = &src[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                srow[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, col: &[T], dx: &mut [T]) {
        let (p, plane) = (self.out_plane(), self.h * self.w);
        for c in 0..self.ci {
            let dst = &mut dx[c * plane..(c + 1) * plane];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let drow = &mut dst[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                drow[ix as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: &ConvGeom,
) -> Tensor<T> {
    let mut out = Tensor::zeros(g.out_shape());
    let (p, k) = (g.out_plane(), g.patch());
    let item = x.shape().item();
    out.data_mut()
        .par_chunks_mut(g.co * p)
        .enumerate()
        .for_each(|(n, dst)| {
            let src = &x.data()[n * item..(n + 1) * item];
            if let Some(b) = bias {
                for (co, chunk) in dst.chunks_mut(p).enumerate() {
                    chunk.fill(b.data()[co]);
                }
            }
            if g.is_pointwise() {
                matmul_acc(kernel.data(), src, dst, g.co, k, p);
            } else {
                let mut col = vec![T::zero(); k * p];
                g.im2col(src, &mut col);
                matmul_acc(kernel.data(), &col, dst, g.co, k, p);
            }
        });
    out
}

/// Returns `(dx, dkernel, dbias)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    with_bias: bool,
    g: &ConvGeom,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Option<Tensor<T>>) {
    let (p, k) = (g.out_plane(), g.patch());
    let item = x.shape().item();
    let mut dx = Tensor::zeros(x.shape());

    let partial_dk: Vec<Vec<T>> = dx
        .data_mut()
        .par_chunks_mut(item)
        .enumerate()
        .map(|(n, dxn)| {
            let go = &gout.data()[n * g.co * p..(n + 1) * g.co * p];
            let xn = &x.data()[n * item..(n + 1) * item];
            let mut dk = vec![T::zero(); g.co * k];
            if g.is_pointwise() {
                matmul_abt_acc(go, xn, &mut dk, g.co, p, k);
                matmul_atb_acc(kernel.data(), go, dxn, g.co, k, p);
            } else {
                let mut col = vec![T::zero(); k * p];
                g.im2col(xn, &mut col);
                matmul_abt_acc(go, &col, &mut dk, g.co, p, k);
                col.fill(T::zero());
                matmul_atb_acc(kernel.data(), go, &mut col, g.co, k, p);
                g.col2im(&col, dxn);
            }
            dk
        })
        .collect();

    let mut dk = Tensor::zeros(kernel.shape());
    for part in &partial_dk {
        for (a, &b) in dk.data_mut().iter_mut().zip(part) {
            *a += b;
        }
    }

    let db = with_bias.then(|| {
        let mut db = vec![T::zero(); g.co];
        for n in 0..g.n {
            for (co, acc) in db.iter_mut().enumerate() {
                let base = (n * g.co + co) * p;
                *acc += gout.data()[base..base + p].iter().copied().sum::<T>();
            }
        }
        Tensor::from_vec(Shape::from_dims(&[g.co]).expect("rank 1"), db).expect("bias length")
    });
    (dx, dk, db)
}

/// Geometry of a 2×2 stride-2 transposed convolution with kernel `[ci, co, 2, 2]`.
pub fn deconv2x2_shape(x: Shape, kernel: Shape) -> Result<Shape> {
    if kernel.n != x.c || kernel.h != 2 || kernel.w != 2 {
        return Err(Error::shape(
            "deconv2x2",
            format!("kernel {kernel} incompatible with input {x}"),
        ));
    }
    if x.numel() == 0 {
        return Err(Error::shape("deconv2x2", format!("zero-extent input {x}")));
    }
    Ok(Shape::new(x.n, kernel.c, 2 * x.h, 2 * x.w))
}

pub fn deconv2x2_forward<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>) -> Tensor<T> {
    let xs = x.shape();
    let ks = kernel.shape();
    let (ci, co, hw) = (xs.c, ks.c, xs.plane());
    let out_shape = Shape::new(xs.n, co, 2 * xs.h, 2 * xs.w);
    let mut out = Tensor::zeros(out_shape);
    let mut tap = vec![T::zero(); co * hw];
    let mut wt = vec![T::zero(); co * ci];
    for n in 0..xs.n {
        let xn = x.item(n);
        for dy in 0..2 {
            for dx in 0..2 {
                // wt[co][ci] = kernel[ci][co][dy][dx]
                for a in 0..ci {
                    for b in 0..co {
                        wt[b * ci + a] = kernel.at(a, b, dy, dx);
                    }
                }
                tap.fill(T::zero());
                matmul_acc(&wt, xn, &mut tap, co, ci, hw);
                for b in 0..co {
                    for y in 0..xs.h {
                        for xx in 0..xs.w {
                            *out.at_mut(n, b, 2 * y + dy, 2 * xx + dx) = tap[b * hw + y * xs.w + xx];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn deconv2x2_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let ks = kernel.shape();
    let (ci, co, hw) = (xs.c, ks.c, xs.plane());
    let mut gx = Tensor::zeros(xs);
    let mut gk = Tensor::zeros(ks);
    let mut tap = vec![T::zero(); co * hw];
    let mut wd = vec![T::zero(); ci * co];
    let mut dwd = vec![T::zero(); ci * co];
    for n in 0..xs.n {
        let xn = x.item(n).to_vec();
        for dy in 0..2 {
            for dx in 0..2 {
                for b in 0..co {
                    for y in 0..xs.h {
                        for xx in 0..xs.w {
                            tap[b * hw + y * xs.w + xx] = gout.at(n, b, 2 * y + dy, 2 * xx + dx);
                        }
                    }
                }
                for a in 0..ci {
                    for b in 0..co {
                        wd[a * co + b] = kernel.at(a, b, dy, dx);
                    }
                }
                let off = n * xs.item();
                matmul_acc(&wd, &tap, &mut gx.data_mut()[off..off + xs.item()], ci, co, hw);
                dwd.fill(T::zero());
                matmul_abt_acc(&xn, &tap, &mut dwd, ci, hw, co);
                for a in 0..ci {
                    for b in 0..co {
                        *gk.at_mut(a, b, dy, dx) += dwd[a * co + b];
                    }
                }
            }
        }
    }
    (gx, gk)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct six-loop cross-correlation, independent of im2col.
    fn direct(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let g = ConvGeom::new(x.shape(), k.shape(), stride, pad).unwrap();
        Tensor::from_fn(g.out_shape(), |n, co, oy, ox| {
            let mut acc = 0.0;
            for ci in 0..g.ci {
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w {
                            acc += x.at(n, ci, iy as usize, ix as usize) * k.at(co, ci, ky, kx);
                        }
                    }
                }
            }
            acc
        })
    }

    fn wave(shape: Shape, seed: f64) -> Tensor<f64> {
        let mut i = 0.0;
        Tensor::from_fn(shape, |_, _, _, _| {
            i += 1.0;
            (i * seed).sin()
        })
    }

    #[test]
    fn im2col_path_matches_direct_loops() {
        for &(stride, pad, kh) in &[(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 0, 1), (1, 0, 3)] {
            let x = wave(Shape::new(2, 3, 7, 6), 0.37);
            let k = wave(Shape::new(4, 3, kh, kh), 0.91);
            let g = ConvGeom::new(x.shape(), k.shape(), stride, pad).unwrap();
            let got = conv2d_forward(&x, &k, None, &g);
            let want = direct(&x, &k, stride, pad);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "stride {stride} pad {pad} k {kh}");
            }
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let x = Shape::new(1, 3, 4, 4);
        assert!(ConvGeom::new(x, Shape::new(2, 2, 3, 3), 1, 1).is_err());
        assert!(ConvGeom::new(x, Shape::new(2, 3, 3, 3), 3, 1).is_err());
        assert!(ConvGeom::new(Shape::new(1, 3, 0, 4), Shape::new(2, 3, 3, 3), 1, 1).is_err());
    }

    #[test]
    fn deconv_places_taps_without_overlap() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let k = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = deconv2x2_forward(&x, &k);
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 4));
        assert_eq!(y.data(), &[1.0, 2.0, 2.0, 4.0, 3.0, 4.0, 6.0, 8.0]);
    }
}
