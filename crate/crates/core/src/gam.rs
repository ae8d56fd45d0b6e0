//! Global attention module.
//!
//! Two rotated views of the input are each reduced by a pair of long-kernel
//! depth-wise convolutions, re-expanded by per-slice outer products, fused by
//! batch norm and a 1×1 convolution, and squashed to a weights volume
//! `λ ∈ [0, 1]` with the input's shape.

use rand::Rng;

use crate::engine::{Activation, Collapse, ParamStore, Session, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d};
use crate::scalar::Scalar;

/// Final squashing of the fused attention map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum OutMap {
    #[default]
    Sigmoid,
    /// Per-pixel softmax over channels; the weights double as class probabilities.
    SoftmaxChannels,
}

impl OutMap {
    fn activation(self) -> Activation {
        match self {
            OutMap::Sigmoid => Activation::Sigmoid,
            OutMap::SoftmaxChannels => Activation::SoftmaxChannels,
        }
    }
}

// NCHW -> N×w×c×h: slices over w, each a c×h matrix.
const TO_QUERY: [usize; 4] = [0, 3, 1, 2];
const FROM_QUERY: [usize; 4] = [0, 2, 3, 1];
// NCHW -> N×h×w×c: slices over h, each a w×c matrix.
const TO_KEY: [usize; 4] = [0, 2, 3, 1];
const FROM_KEY: [usize; 4] = [0, 3, 1, 2];

/// A GAM bound to one input geometry. Kernel lengths depend on `h` and `w`,
/// so a module only accepts the resolution it was built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Gam {
    pub prefix: String,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub out_map: OutMap,
}

impl Gam {
    pub fn new(prefix: impl Into<String>, h: usize, w: usize, c: usize, out_map: OutMap) -> Self {
        Gam {
            prefix: prefix.into(),
            h,
            w,
            c,
            out_map,
        }
    }

    fn name(&self, tensor: &str) -> String {
        format!("{}.{tensor}", self.prefix)
    }

    fn bn(&self) -> BatchNorm {
        BatchNorm::new(self.name("bn"), 2 * self.c)
    }

    fn fuse(&self) -> Conv2d {
        Conv2d::new(self.name("fuse"), 2 * self.c, self.c, 1).with_bias()
    }

    /// Names and dims of the four depth-wise kernel banks.
    pub fn depthwise_params(&self) -> [(String, [usize; 2]); 4] {
        let (h, w, c) = (self.h, self.w, self.c);
        [
            (self.name("wq_h"), [w, h]),
            (self.name("wq_c"), [w, c]),
            (self.name("wk_w"), [h, w]),
            (self.name("wk_c"), [h, c]),
        ]
    }

    pub fn param_count(&self, include_aux: bool) -> usize {
        gam_param_count(self.h, self.w, self.c, include_aux)
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        for (name, dims) in self.depthwise_params() {
            store.init_kaiming(&name, &dims, dims[1], rng)?;
        }
        self.bn().init(store)?;
        self.fuse().init(store, rng)
    }

    /// Returns `(λ, λ ⊙ x)`.
    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<(Var, Var)> {
        let s = sess.tape().shape(x);
        if (s.c, s.h, s.w) != (self.c, self.h, self.w) {
            return Err(Error::shape(
                "gam_forward",
                format!(
                    "module built for c×h×w = {}×{}×{}, input is {s}",
                    self.c, self.h, self.w
                ),
            ));
        }
        let [(wq_h, _), (wq_c, _), (wk_w, _), (wk_c, _)] = self.depthwise_params();
        let wq_h = sess.param(&wq_h)?;
        let wq_c = sess.param(&wq_c)?;
        let wk_w = sess.param(&wk_w)?;
        let wk_c = sess.param(&wk_c)?;

        let tape = sess.tape_mut();
        let q = tape.permute(x, TO_QUERY)?;
        let q_h = tape.depthwise_long_conv(q, wq_h, Collapse::Cols)?;
        let q_c = tape.depthwise_long_conv(q, wq_c, Collapse::Rows)?;
        let a_q = tape.slice_outer_product(q_h, q_c)?;
        let a_q = tape.permute(a_q, FROM_QUERY)?;

        let k = tape.permute(x, TO_KEY)?;
        let k_c = tape.depthwise_long_conv(k, wk_c, Collapse::Cols)?;
        let k_v = tape.depthwise_long_conv(k, wk_w, Collapse::Rows)?;
        let a_k = tape.slice_outer_product(k_c, k_v)?;
        let a_k = tape.permute(a_k, FROM_KEY)?;

        let joined = tape.concat_channels(&[a_q, a_k])?;
        let normed = self.bn().forward(sess, joined)?;
        let fused = self.fuse().forward(sess, normed)?;
        let tape = sess.tape_mut();
        let fused = tape.activation(fused, Activation::Swish)?;
        let lambda = tape.activation(fused, self.out_map.activation())?;
        let out = tape.mul(lambda, x)?;
        Ok((lambda, out))
    }
}

/// `(1 + λ) ⊙ x`
pub fn gam_residual<T: Scalar>(sess: &mut Session<'_, T>, x: Var, lambda: Var) -> Result<Var> {
    let tape = sess.tape_mut();
    if tape.shape(x) != tape.shape(lambda) {
        return Err(Error::shape(
            "gam_residual",
            format!("x is {}, λ is {}", tape.shape(x), tape.shape(lambda)),
        ));
    }
    let gate = tape.add_scalar(lambda, T::one())?;
    tape.mul(gate, x)
}

/// Depth-wise kernels alone give `2hw + cw + hc`; the auxiliary layers add the
/// fuse convolution with bias and the batch-norm scale and shift.
pub fn gam_param_count(h: usize, w: usize, c: usize, include_aux: bool) -> usize {
    let depthwise = 2 * h * w + c * w + h * c;
    if include_aux {
        depthwise + 2 * c * c + c + 2 * (2 * c)
    } else {
        depthwise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Mode, Shape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn built(h: usize, w: usize, c: usize, out_map: OutMap) -> (Gam, ParamStore<f64>) {
        let gam = Gam::new("gam.t", h, w, c, out_map);
        let mut store = ParamStore::new();
        gam.init(&mut store, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        (gam, store)
    }

    #[test]
    fn formula_values() {
        assert_eq!(gam_param_count(8, 10, 6, false), 268);
        assert_eq!(gam_param_count(1, 1, 1, false), 4);
        assert_eq!(gam_param_count(8, 10, 6, true), 370);
    }

    #[test]
    fn zero_kernels_give_half() {
        let (gam, mut store) = built(4, 5, 3, OutMap::Sigmoid);
        for (name, _) in gam.depthwise_params() {
            store.get_mut(&name).unwrap().tensor.data_mut().fill(0.0);
        }
        let x = Tensor::from_fn(Shape::new(2, 3, 4, 5), |n, c, h, w| (n + 2 * c + h) as f64 - w as f64 * 0.3);
        let mut sess = Session::new(&mut store, Mode::Train);
        let xv = sess.input(x.clone());
        let (lambda, out) = gam.forward(&mut sess, xv).unwrap();
        assert!(sess.value(lambda).data().iter().all(|&l| (l - 0.5).abs() < 1e-12));
        for (o, xi) in sess.value(out).data().iter().zip(x.data()) {
            assert!((o - 0.5 * xi).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_is_preserved() {
        let (gam, mut store) = built(8, 10, 6, OutMap::Sigmoid);
        let mut sess = Session::new(&mut store, Mode::Eval);
        let xv = sess.input(Tensor::full(Shape::new(1, 6, 8, 10), 0.2));
        let (lambda, out) = gam.forward(&mut sess, xv).unwrap();
        assert_eq!(sess.tape().shape(lambda), Shape::new(1, 6, 8, 10));
        assert_eq!(sess.tape().shape(out), Shape::new(1, 6, 8, 10));
    }

    #[test]
    fn wrong_geometry_is_rejected() {
        let (gam, mut store) = built(8, 10, 6, OutMap::Sigmoid);
        let mut sess = Session::new(&mut store, Mode::Eval);
        let xv = sess.input(Tensor::zeros(Shape::new(1, 6, 10, 8)));
        assert!(gam.forward(&mut sess, xv).is_err());
    }

    #[test]
    fn softmax_weights_sum_to_one() {
        let (gam, mut store) = built(3, 4, 5, OutMap::SoftmaxChannels);
        let mut sess = Session::new(&mut store, Mode::Train);
        let x = Tensor::from_fn(Shape::new(2, 5, 3, 4), |n, c, h, w| ((n * 7 + c * 5 + h * 3 + w) % 11) as f64 - 5.0);
        let xv = sess.input(x);
        let (lambda, _) = gam.forward(&mut sess, xv).unwrap();
        let l = sess.value(lambda);
        for n in 0..2 {
            for h in 0..3 {
                for w in 0..4 {
                    let s: f64 = (0..5).map(|c| l.at(n, c, h, w)).sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
