//! Row-major matrix kernels used by the convolution ops.
//!
//! Every reduction runs in a fixed order so results are bit-reproducible.

use crate::scalar::Scalar;

const COL_BLOCK: usize = 256;

/// `c[m×p] += a[m×k] · b[k×p]`
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, p: usize) {
    debug_assert!(a.len() >= m * k && b.len() >= k * p && c.len() >= m * p);
    let mut j0 = 0;
    while j0 < p {
        let j1 = (j0 + COL_BLOCK).min(p);
        for i in 0..m {
            let crow = &mut c[i * p + j0..i * p + j1];
            let arow = &a[i * k..(i + 1) * k];
            for (kk, &av) in arow.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let brow = &b[kk * p + j0..kk * p + j1];
                axpy(av, brow, crow);
            }
        }
        j0 = j1;
    }
}

/// `c[m×k] += a[m×p] · b[k×p]ᵀ`
pub fn matmul_abt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, p: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * p..(i + 1) * p];
        for kk in 0..k {
            c[i * k + kk] += dot(arow, &b[kk * p..(kk + 1) * p]);
        }
    }
}

/// `c[k×p] += a[m×k]ᵀ · b[m×p]`
pub fn matmul_atb_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, p: usize) {
    let mut j0 = 0;
    while j0 < p {
        let j1 = (j0 + COL_BLOCK).min(p);
        for i in 0..m {
            let brow = &b[i * p + j0..i * p + j1];
            for kk in 0..k {
                let av = a[i * k + kk];
                if av == T::zero() {
                    continue;
                }
                axpy(av, brow, &mut c[kk * p + j0..kk * p + j1]);
            }
        }
        j0 = j1;
    }
}

#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Dot product with eight independent partial sums, combined in a fixed order.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (xa, xb) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * p];
        for i in 0..m {
            for j in 0..p {
                for l in 0..k {
                    c[i * p + j] += a[i * k + l] * b[l * p + j];
                }
            }
        }
        c
    }

    fn ramp(n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64) * s).sin()).collect()
    }

    #[test]
    fn three_products_agree_with_naive() {
        let (m, k, p) = (5, 7, 300);
        let a = ramp(m * k, 0.7);
        let b = ramp(k * p, 0.3);
        let want = naive(&a, &b, m, k, p);

        let mut c = vec![0.0; m * p];
        matmul_acc(&a, &b, &mut c, m, k, p);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // a·bᵀ with b stored as (p×k)ᵀ = want's layout transposed
        let bt: Vec<f64> = (0..p * k).map(|i| b[(i % k) * p + i / k]).collect();
        let mut c2 = vec![0.0; m * p];
        matmul_abt_acc(&a, &bt, &mut c2, m, k, p);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ·b with a stored transposed
        let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        let mut c3 = vec![0.0; m * p];
        matmul_atb_acc(&at, &b, &mut c3, k, m, p);
        for (x, y) in c3.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_handles_tails() {
        for n in [0, 1, 7, 8, 9, 17] {
            let a = ramp(n, 0.9);
            let b = ramp(n, 0.4);
            let want: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - want).abs() < 1e-12);
        }
    }
}
