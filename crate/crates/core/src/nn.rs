//! Parameterized layers over the engine: each layer knows its parameter
//! names, how to initialize them and how to run forward on a session.

use rand::Rng;

use crate::engine::{ParamKind, ParamStore, Session, Var};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, c_in: usize, c_out: usize, kernel: usize) -> Self {
        Conv2d {
            name: name.into(),
            c_in,
            c_out,
            kernel,
            stride: 1,
            padding: kernel / 2,
            bias: false,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_bias(mut self) -> Self {
        self.bias = true;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel + if self.bias { self.c_out } else { 0 }
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        store.init_kaiming(
            &self.weight_name(),
            &[self.c_out, self.c_in, self.kernel, self.kernel],
            self.c_in * self.kernel * self.kernel,
            rng,
        )?;
        if self.bias {
            store.init_const(&self.bias_name(), &[self.c_out], 0.0, ParamKind::Trainable)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = sess.param(&self.weight_name())?;
        let b = if self.bias {
            Some(sess.param(&self.bias_name())?)
        } else {
            None
        };
        sess.tape_mut().conv2d(x, w, b, self.stride, self.padding)
    }
}

/// 2×2 stride-2 transposed convolution without bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Deconv2x2 {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
}

impl Deconv2x2 {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn param_count(&self) -> usize {
        self.c_in * self.c_out * 4
    }

    pub fn init<T: Scalar, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) -> Result<()> {
        store.init_kaiming(&self.weight_name(), &[self.c_in, self.c_out, 2, 2], self.c_in, rng)
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = sess.param(&self.weight_name())?;
        sess.tape_mut().deconv2x2(x, w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub name: String,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNorm {
            name: name.into(),
            channels,
        }
    }

    /// Trainable scale and shift only.
    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let c = [self.channels];
        store.init_const(&format!("{}.gamma", self.name), &c, 1.0, ParamKind::Trainable)?;
        store.init_const(&format!("{}.beta", self.name), &c, 0.0, ParamKind::Trainable)?;
        store.init_const(&format!("{}.running_mean", self.name), &c, 0.0, ParamKind::Buffer)?;
        store.init_const(&format!("{}.running_var", self.name), &c, 1.0, ParamKind::Buffer)?;
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: Var) -> Result<Var> {
        sess.batchnorm(x, &self.name)
    }
}
