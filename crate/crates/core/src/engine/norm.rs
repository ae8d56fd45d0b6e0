//! Per-channel batch normalization over the N, H and W axes.

use super::tensor::Tensor;
use crate::scalar::Scalar;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Saved state of a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased variance (divides by the element count).
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
    pub xhat: Tensor<T>,
}

pub fn batchnorm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
) -> (Tensor<T>, BatchStats<T>) {
    let s = x.shape();
    let plane = s.plane();
    let count = T::from_usize_lossy(s.n * plane);
    let eps = T::lit(BN_EPSILON);
    let mut mean = vec![T::zero(); s.c];
    let mut var = vec![T::zero(); s.c];
    for c in 0..s.c {
        let mut acc = T::zero();
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            acc += x.data()[base..base + plane].iter().copied().sum::<T>();
        }
        let m = acc / count;
        let mut sq = T::zero();
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            for &v in &x.data()[base..base + plane] {
                sq += (v - m) * (v - m);
            }
        }
        mean[c] = m;
        var[c] = sq / count;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(s);
    let mut y = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                let h = (x.data()[i] - mean[c]) * inv_std[c];
                xhat.data_mut()[i] = h;
                y.data_mut()[i] = gamma[c] * h + beta[c];
            }
        }
    }
    (
        y,
        BatchStats {
            mean,
            var,
            inv_std,
            xhat,
        },
    )
}

/// Returns `(dx, dgamma, dbeta)` for the training-mode forward.
pub fn batchnorm_train_backward<T: Scalar>(
    stats: &BatchStats<T>,
    gamma: &[T],
    g: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let s = g.shape();
    let plane = s.plane();
    let count = T::from_usize_lossy(s.n * plane);
    let mut dgamma = vec![T::zero(); s.c];
    let mut dbeta = vec![T::zero(); s.c];
    for c in 0..s.c {
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                dbeta[c] += g.data()[i];
                dgamma[c] += g.data()[i] * stats.xhat.data()[i];
            }
        }
    }
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let scale = gamma[c] * stats.inv_std[c] / count;
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                dx.data_mut()[i] = scale
                    * (count * g.data()[i] - dbeta[c] - stats.xhat.data()[i] * dgamma[c]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Affine normalization with frozen statistics; returns the output and `1/√(var+ε)`.
pub fn batchnorm_eval<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
) -> (Tensor<T>, Vec<T>) {
    let s = x.shape();
    let plane = s.plane();
    let eps = T::lit(BN_EPSILON);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                y.data_mut()[i] = gamma[c] * (x.data()[i] - mean[c]) * inv_std[c] + beta[c];
            }
        }
    }
    (y, inv_std)
}

pub fn batchnorm_eval_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    mean: &[T],
    inv_std: &[T],
    g: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let s = x.shape();
    let plane = s.plane();
    let mut dx = Tensor::zeros(s);
    let mut dgamma = vec![T::zero(); s.c];
    let mut dbeta = vec![T::zero(); s.c];
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                let gv = g.data()[i];
                dx.data_mut()[i] = gv * gamma[c] * inv_std[c];
                dgamma[c] += gv * (x.data()[i] - mean[c]) * inv_std[c];
                dbeta[c] += gv;
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// `running ← (1 − momentum)·running + momentum·batch`
pub fn update_running<T: Scalar>(running: &mut [T], batch: &[T]) {
    let m = T::lit(BN_MOMENTUM);
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = (T::one() - m) * *r + m * b;
    }
}
