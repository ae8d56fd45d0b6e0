//! Dense bottleneck stacks, the vote-and-upsample block and the inference-block stem.

use rand::Rng;

use crate::engine::{Activation, ParamStore, Session, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv2d, Deconv2x2};
use crate::scalar::Scalar;

/// 1×1 expand to `s·k`, 3×3 squeeze to `k`, each followed by BN and swish.
#[derive(Clone, Debug, PartialEq)]
pub struct Bottleneck {
    pub prefix: String,
    pub c_in: usize,
    pub k: usize,
    pub s: usize,
}

impl Bottleneck {
    fn expand(&self) -> Conv2d {
        Conv2d::new(format!("{}.expand", self.prefix), self.c_in, self.s * self.k, 1)
    }

    fn bn1(&self) -> BatchNorm {
        BatchNorm::new(format!("{}.bn1", self.prefix), self.s * self.k)
    }

    fn squeeze(&self) -> Conv2d {
        Conv2d::new(format!("{}.squeeze", self.prefix), self.s * self.k, self.k, 3)
    }

    fn bn2(&self) -> BatchNorm {
        BatchNorm::new(format!("{}.bn2", self.prefix), self.k)
    }

    pub fn param_count(&self) -> usize {
        self.expand().param_count()
            + self.bn1().param_count()
            + self.squeeze().param_count()
            + self.bn2().param_count()
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.expand().init(store, rng)?;
        self.bn1().init(store)?;
        self.squeeze().init(store, rng)?;
        self.bn2().init(store)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let c = sess.tape().shape(x).c;
        if c != self.c_in {
            return Err(Error::shape(
                "bottleneck_forward",
                format!("expected {} input channels, got {c}", self.c_in),
            ));
        }
        let y = self.expand().forward(sess, x)?;
        let y = self.bn1().forward(sess, y)?;
        let y = sess.tape_mut().activation(y, Activation::Swish)?;
        let y = self.squeeze().forward(sess, y)?;
        let y = self.bn2().forward(sess, y)?;
        sess.tape_mut().activation(y, Activation::Swish)
    }
}

/// `n` densely connected bottlenecks; output has `(n + 1)·k` channels with the
/// input first and the newest features last.
#[derive(Clone, Debug, PartialEq)]
pub struct Ess {
    pub prefix: String,
    pub n: usize,
    pub k: usize,
    pub s: usize,
}

impl Ess {
    pub fn new(prefix: impl Into<String>, n: usize, k: usize, s: usize) -> Self {
        Ess {
            prefix: prefix.into(),
            n,
            k,
            s,
        }
    }

    pub fn out_channels(&self) -> usize {
        (self.n + 1) * self.k
    }

    pub fn bottlenecks(&self) -> impl Iterator<Item = Bottleneck> + '_ {
        (1..=self.n).map(move |j| Bottleneck {
            prefix: format!("{}.bnk{j}", self.prefix),
            c_in: j * self.k,
            k: self.k,
            s: self.s,
        })
    }

    pub fn param_count(&self) -> usize {
        self.bottlenecks().map(|b| b.param_count()).sum()
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        for b in self.bottlenecks() {
            b.init(store, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let c = sess.tape().shape(x).c;
        if c != self.k {
            return Err(Error::shape(
                "ess_forward",
                format!("expected {} input channels, got {c}", self.k),
            ));
        }
        let mut state = x;
        for (j, b) in self.bottlenecks().enumerate() {
            let y = sess.scoped(&format!("bnk{}", j + 1), |sess| b.forward(sess, state))?;
            state = sess.tape_mut().concat_channels(&[state, y])?;
        }
        Ok(state)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum VuMode {
    #[default]
    Nearest,
    /// 2×2 stride-2 transposed convolution in place of nearest interpolation.
    Deconv,
}

/// Vote and upsample: bias-free 1×1 conv over the concatenated inputs, then 2×.
#[derive(Clone, Debug, PartialEq)]
pub struct Vu {
    pub prefix: String,
    pub c_in: usize,
    pub k: usize,
    pub mode: VuMode,
}

impl Vu {
    fn vote(&self) -> Conv2d {
        Conv2d::new(format!("{}.vote", self.prefix), self.c_in, self.k, 1)
    }

    fn deconv(&self) -> Deconv2x2 {
        Deconv2x2 {
            name: format!("{}.deconv", self.prefix),
            c_in: self.k,
            c_out: self.k,
        }
    }

    pub fn param_count(&self) -> usize {
        self.vote().param_count()
            + match self.mode {
                VuMode::Nearest => 0,
                VuMode::Deconv => self.deconv().param_count(),
            }
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.vote().init(store, rng)?;
        if self.mode == VuMode::Deconv {
            self.deconv().init(store, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<'_, T>,
        deep: Var,
        highway: Option<Var>,
    ) -> Result<Var> {
        let merged = match highway {
            Some(hw) => {
                let (a, b) = (sess.tape().shape(deep), sess.tape().shape(hw));
                if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
                    return Err(Error::shape(
                        "vu_forward",
                        format!("deep path {a} and highway {b} differ spatially"),
                    ));
                }
                sess.tape_mut().concat_channels(&[deep, hw])?
            }
            None => deep,
        };
        let c = sess.tape().shape(merged).c;
        if c != self.c_in {
            return Err(Error::shape(
                "vu_forward",
                format!("expected {} merged channels, got {c}", self.c_in),
            ));
        }
        let voted = self.vote().forward(sess, merged)?;
        match self.mode {
            VuMode::Nearest => sess.tape_mut().upsample_nearest2x(voted),
            VuMode::Deconv => self.deconv().forward(sess, voted),
        }
    }
}

/// Stride-2 3×3 conv to `k` channels, BN, swish.
#[derive(Clone, Debug, PartialEq)]
pub struct Stem {
    pub prefix: String,
    pub c_in: usize,
    pub k: usize,
}

impl Stem {
    fn conv(&self) -> Conv2d {
        Conv2d::new(format!("{}.conv", self.prefix), self.c_in, self.k, 3).stride(2)
    }

    fn bn(&self) -> BatchNorm {
        BatchNorm::new(format!("{}.bn", self.prefix), self.k)
    }

    pub fn param_count(&self) -> usize {
        self.conv().param_count() + self.bn().param_count()
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        self.conv().init(store, rng)?;
        self.bn().init(store)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv().forward(sess, x)?;
        let y = self.bn().forward(sess, y)?;
        sess.tape_mut().activation(y, Activation::Swish)
    }
}
