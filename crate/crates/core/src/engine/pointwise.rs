//! Activations and the per-pixel channel softmax.

use super::tensor::Tensor;
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Swish,
    Sigmoid,
    Relu,
    /// Softmax across the channel axis, independently per pixel.
    SoftmaxChannels,
}

impl Activation {
    /// Floating point operations charged per output element.
    pub(crate) fn flops_per_element(self) -> u64 {
        match self {
            Activation::Relu => 1,
            Activation::Sigmoid => 4,
            Activation::Swish => 5,
            Activation::SoftmaxChannels => 5,
        }
    }
}

pub fn activate<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Swish => x.map(|v| v * sigmoid(v)),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Relu => x.map(|v| v.max(T::zero())),
        Activation::SoftmaxChannels => softmax_channels(x),
    }
}

fn softmax_channels<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    let mut buf = vec![T::zero(); s.c];
    for n in 0..s.n {
        let base = n * s.item();
        for p in 0..plane {
            let mut max = T::neg_infinity();
            for c in 0..s.c {
                max = max.max(x.data()[base + c * plane + p]);
            }
            let mut total = T::zero();
            for (c, b) in buf.iter_mut().enumerate() {
                *b = (x.data()[base + c * plane + p] - max).exp();
                total += *b;
            }
            for (c, b) in buf.iter().enumerate() {
                out.data_mut()[base + c * plane + p] = *b / total;
            }
        }
    }
    out
}

/// Gradient with respect to the activation input.
pub fn activate_backward<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    kind: Activation,
    g: &Tensor<T>,
) -> Tensor<T> {
    let mut out = Tensor::zeros(x.shape());
    let dst = out.data_mut();
    match kind {
        Activation::Swish => {
            for i in 0..dst.len() {
                let v = x.data()[i];
                let sg = sigmoid(v);
                dst[i] = g.data()[i] * sg * (T::one() + v * (T::one() - sg));
            }
        }
        Activation::Sigmoid => {
            for i in 0..dst.len() {
                let yv = y.data()[i];
                dst[i] = g.data()[i] * yv * (T::one() - yv);
            }
        }
        Activation::Relu => {
            for i in 0..dst.len() {
                dst[i] = if x.data()[i] > T::zero() { g.data()[i] } else { T::zero() };
            }
        }
        Activation::SoftmaxChannels => {
            let s = x.shape();
            let plane = s.plane();
            for n in 0..s.n {
                let base = n * s.item();
                for p in 0..plane {
                    let mut inner = T::zero();
                    for c in 0..s.c {
                        let i = base + c * plane + p;
                        inner += g.data()[i] * y.data()[i];
                    }
                    for c in 0..s.c {
                        let i = base + c * plane + p;
                        dst[i] = y.data()[i] * (g.data()[i] - inner);
                    }
                }
            }
        }
    }
    out
}
