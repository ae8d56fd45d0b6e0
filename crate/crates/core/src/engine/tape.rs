//! Operation recording and reverse-mode differentiation.
//!
//! Every op appends one node holding its output value, its inputs and whatever
//! it saved for the backward rule. [`Tape::backward`] walks the nodes in reverse
//! recording order and accumulates gradients additively into each input.
//!
//! A dry tape records shapes and floating point operation counts only; values
//! are never computed. It is used to profile full-resolution models cheaply.

use std::collections::HashMap;

use super::conv::{self, ConvGeom};
use super::layout;
use super::longconv::{self, Collapse};
use super::norm::{self, BatchStats};
use super::pointwise::{self, Activation};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for ops defined outside the engine, such as the losses.
pub trait CustomOp<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradient for each input, given the output gradient. `None` means the
    /// input does not receive a gradient from this op.
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Deconv2x2 {
        x: Var,
        kernel: Var,
    },
    LongConv {
        x: Var,
        kernels: Var,
        axis: Collapse,
    },
    SliceOuter {
        cols: Var,
        rows: Var,
    },
    Permute {
        x: Var,
        perm: [usize; 4],
    },
    Concat {
        xs: Vec<Var>,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: BatchStats<T>,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Upsample2x {
        x: Var,
    },
    Crop {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    AddScalar {
        x: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    Sum {
        x: Var,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp<T>>,
    },
}

impl<T: Scalar> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Deconv2x2 { .. } => "deconv2x2",
            Op::LongConv { .. } => "depthwise_long_conv",
            Op::SliceOuter { .. } => "slice_outer_product",
            Op::Permute { .. } => "permute",
            Op::Concat { .. } => "concat_channels",
            Op::BatchNormTrain { .. } | Op::BatchNormEval { .. } => "batchnorm",
            Op::Act { .. } => "activation",
            Op::Upsample2x { .. } => "upsample_nearest2x",
            Op::Crop { .. } => "crop",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::AddScalar { .. } => "add_scalar",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    scope: usize,
    flops: u64,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    dry: bool,
    scopes: Vec<String>,
    scope_ids: HashMap<String, usize>,
    scope_stack: Vec<usize>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            dry: false,
            scopes: vec![String::new()],
            scope_ids: HashMap::from([(String::new(), 0)]),
            scope_stack: vec![0],
        }
    }

    /// A tape that tracks shapes and operation counts without computing values.
    pub fn dry() -> Self {
        Tape {
            dry: true,
            ..Self::new()
        }
    }

    pub fn is_dry(&self) -> bool {
        self.dry
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Consumes the tape, keeping only the value of `v`.
    pub fn value_owned(mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::placeholder(Shape::scalar()))
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    // ---- scopes and accounting ------------------------------------------

    pub fn push_scope(&mut self, name: &str) {
        let parent = &self.scopes[*self.scope_stack.last().expect("root scope")];
        let path = if parent.is_empty() {
            name.to_string()
        } else {
            format!("{parent}.{name}")
        };
        let next = self.scopes.len();
        let id = *self.scope_ids.entry(path.clone()).or_insert(next);
        if id == next {
            self.scopes.push(path);
        }
        self.scope_stack.push(id);
    }

    pub fn pop_scope(&mut self) {
        if self.scope_stack.len() > 1 {
            self.scope_stack.pop();
        }
    }

    pub fn current_scope(&self) -> &str {
        &self.scopes[*self.scope_stack.last().expect("root scope")]
    }

    /// Floating point operations recorded so far.
    pub fn total_flops(&self) -> u64 {
        self.nodes.iter().map(|n| n.flops).sum()
    }

    /// Operation counts grouped by the scope path active when each op ran,
    /// in first-seen order.
    pub fn flops_by_scope(&self) -> Vec<(String, u64)> {
        let mut acc = vec![0u64; self.scopes.len()];
        for n in &self.nodes {
            acc[n.scope] += n.flops;
        }
        self.scopes
            .iter()
            .cloned()
            .zip(acc)
            .filter(|(_, f)| *f > 0)
            .collect()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, flops: u64) -> Var {
        let scope = *self.scope_stack.last().expect("root scope");
        self.nodes.push(Node {
            value,
            op,
            scope,
            flops,
        });
        Var(self.nodes.len() - 1)
    }

    fn output(&self, shape: Shape, compute: impl FnOnce() -> Tensor<T>) -> Tensor<T> {
        if self.dry {
            Tensor::placeholder(shape)
        } else {
            compute()
        }
    }

    // ---- ops ---------------------------------------------------------------

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let value = if self.dry {
            Tensor::placeholder(value.shape())
        } else {
            value
        };
        self.push(value, Op::Leaf, 0)
    }

    /// Leaf with a shape but no values; only meaningful on a dry tape.
    pub fn leaf_shape(&mut self, shape: Shape) -> Var {
        let value = if self.dry {
            Tensor::placeholder(shape)
        } else {
            Tensor::zeros(shape)
        };
        self.push(value, Op::Leaf, 0)
    }

    /// Cross-correlation with kernel `Co×Ci×kh×kw` and optional bias of `Co` values.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(kernel), stride, padding)?;
        if let Some(b) = bias {
            if self.shape(b).numel() != geom.co {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {} for {} output channels", self.shape(b), geom.co),
                ));
            }
        }
        let out_shape = geom.out_shape();
        let flops = 2 * geom.macs() + if bias.is_some() { out_shape.numel() as u64 } else { 0 };
        let value = self.output(out_shape, || {
            conv::conv2d_forward(
                self.value(x),
                self.value(kernel),
                bias.map(|b| self.value(b)),
                &geom,
            )
        });
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            },
            flops,
        ))
    }

    /// 2×2 stride-2 transposed convolution with kernel `Ci×Co×2×2`, no bias.
    pub fn deconv2x2(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let out_shape = conv::deconv2x2_shape(self.shape(x), self.shape(kernel))?;
        let flops = 2 * (self.shape(x).numel() * self.shape(kernel).c * 4) as u64;
        let value = self.output(out_shape, || {
            conv::deconv2x2_forward(self.value(x), self.value(kernel))
        });
        Ok(self.push(value, Op::Deconv2x2 { x, kernel }, flops))
    }

    /// Depth-wise valid convolution whose kernels span an entire axis of each
    /// `R×S` slice. `kernels` is `1×1×D×L`.
    pub fn depthwise_long_conv(&mut self, x: Var, kernels: Var, axis: Collapse) -> Result<Var> {
        let out_shape = longconv::long_conv_shape(self.shape(x), self.shape(kernels), axis)?;
        let flops = 2 * self.shape(x).numel() as u64;
        let value = self.output(out_shape, || {
            longconv::long_conv_forward(self.value(x), self.value(kernels), axis)
        });
        Ok(self.push(value, Op::LongConv { x, kernels, axis }, flops))
    }

    /// `out[n,d,r,s] = cols[n,d,r,0] · rows[n,d,0,s]`
    pub fn slice_outer_product(&mut self, cols: Var, rows: Var) -> Result<Var> {
        let out_shape = longconv::slice_outer_shape(self.shape(cols), self.shape(rows))?;
        let value = self.output(out_shape, || {
            longconv::slice_outer_forward(self.value(cols), self.value(rows))
        });
        Ok(self.push(value, Op::SliceOuter { cols, rows }, out_shape.numel() as u64))
    }

    /// Output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: [usize; 4]) -> Result<Var> {
        let out_shape = layout::permute_shape(self.shape(x), perm)?;
        let value = self.output(out_shape, || layout::permute(self.value(x), perm));
        Ok(self.push(value, Op::Permute { x, perm }, 0))
    }

    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let shapes: Vec<Shape> = xs.iter().map(|&v| self.shape(v)).collect();
        let out_shape = layout::concat_shape(&shapes)?;
        let value = self.output(out_shape, || {
            let parts: Vec<&Tensor<T>> = xs.iter().map(|&v| self.value(v)).collect();
            layout::concat_channels(&parts)
        });
        Ok(self.push(value, Op::Concat { xs: xs.to_vec() }, 0))
    }

    fn check_channel_params(&self, x: Var, params: &[Var]) -> Result<()> {
        let c = self.shape(x).c;
        for &p in params {
            if self.shape(p).numel() != c {
                return Err(Error::shape(
                    "batchnorm",
                    format!("parameter {} for {c} channels", self.shape(p)),
                ));
            }
        }
        Ok(())
    }

    /// Normalizes with batch statistics; returns the output with the batch
    /// mean and biased variance per channel (empty on a dry tape).
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, Vec<T>, Vec<T>)> {
        self.check_channel_params(x, &[gamma, beta])?;
        let shape = self.shape(x);
        let flops = 2 * shape.numel() as u64;
        if self.dry {
            let stats = BatchStats {
                mean: Vec::new(),
                var: Vec::new(),
                inv_std: Vec::new(),
                xhat: Tensor::placeholder(shape),
            };
            let v = self.push(Tensor::placeholder(shape), Op::BatchNormTrain { x, gamma, beta, stats }, flops);
            return Ok((v, Vec::new(), Vec::new()));
        }
        let (y, stats) = norm::batchnorm_train(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let (mean, var) = (stats.mean.clone(), stats.var.clone());
        let v = self.push(y, Op::BatchNormTrain { x, gamma, beta, stats }, flops);
        Ok((v, mean, var))
    }

    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<Var> {
        self.check_channel_params(x, &[gamma, beta])?;
        let shape = self.shape(x);
        if running_mean.len() != shape.c || running_var.len() != shape.c {
            return Err(Error::shape(
                "batchnorm",
                format!("running statistics sized {} for {} channels", running_mean.len(), shape.c),
            ));
        }
        let flops = 2 * shape.numel() as u64;
        let (value, inv_std) = if self.dry {
            (Tensor::placeholder(shape), Vec::new())
        } else {
            norm::batchnorm_eval(
                self.value(x),
                self.value(gamma).data(),
                self.value(beta).data(),
                running_mean,
                running_var,
            )
        };
        Ok(self.push(
            value,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean: running_mean.to_vec(),
                inv_std,
            },
            flops,
        ))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let shape = self.shape(x);
        if kind == Activation::SoftmaxChannels && shape.c == 0 {
            return Err(Error::shape("activation", "softmax over zero channels"));
        }
        let value = self.output(shape, || pointwise::activate(self.value(x), kind));
        Ok(self.push(
            value,
            Op::Act { x, kind },
            kind.flops_per_element() * shape.numel() as u64,
        ))
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let out_shape = Shape::new(s.n, s.c, 2 * s.h, 2 * s.w);
        let value = self.output(out_shape, || layout::upsample2x(self.value(x)));
        Ok(self.push(value, Op::Upsample2x { x }, 0))
    }

    /// Keeps the top-left `h`×`w` window; a no-op when the extents already match.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let s = self.shape(x);
        if (s.h, s.w) == (h, w) {
            return Ok(x);
        }
        if h > s.h || w > s.w {
            return Err(Error::shape("crop", format!("window {h}x{w} exceeds {s}")));
        }
        let out_shape = Shape::new(s.n, s.c, h, w);
        let value = self.output(out_shape, || layout::crop(self.value(x), h, w));
        Ok(self.push(value, Op::Crop { x }, 0))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa} vs {sb}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("add", a, b)?;
        let value = self.output(s, || zip_with(self.value(a), self.value(b), |x, y| x + y));
        Ok(self.push(value, Op::Add { a, b }, s.numel() as u64))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = self.same_shape("mul", a, b)?;
        let value = self.output(s, || zip_with(self.value(a), self.value(b), |x, y| x * y));
        Ok(self.push(value, Op::Mul { a, b }, s.numel() as u64))
    }

    pub fn add_scalar(&mut self, x: Var, offset: T) -> Result<Var> {
        let s = self.shape(x);
        let value = self.output(s, || self.value(x).map(|v| v + offset));
        Ok(self.push(value, Op::AddScalar { x }, s.numel() as u64))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let s = self.shape(x);
        let value = self.output(s, || self.value(x).map(|v| v * factor));
        Ok(self.push(value, Op::Scale { x, factor }, s.numel() as u64))
    }

    /// Sum of all elements as a `1×1×1×1` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let value = self.output(Shape::scalar(), || Tensor::scalar(self.value(x).sum()));
        Ok(self.push(value, Op::Sum { x }, s.numel() as u64))
    }

    /// Records an externally computed op. `compute` is skipped on a dry tape.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        out_shape: Shape,
        flops: u64,
        op: Box<dyn CustomOp<T>>,
        compute: impl FnOnce(&[&Tensor<T>]) -> Result<Tensor<T>>,
    ) -> Result<Var> {
        let value = if self.dry {
            Tensor::placeholder(out_shape)
        } else {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
            let v = compute(&vals)?;
            if v.shape() != out_shape {
                return Err(Error::shape(
                    op.name(),
                    format!("declared {out_shape}, computed {}", v.shape()),
                ));
            }
            v
        };
        Ok(self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            flops,
        ))
    }

    // ---- reverse pass --------------------------------------------------------

    /// Propagates `d loss / d v` to every node recorded before `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.dry {
            return Err(Error::Invalid("backward on a dry tape".into()));
        }
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {ls}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(ls, T::one()));
        let mut visited = 0;
        for i in (0..=loss.0).rev() {
            visited += 1;
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, visited })
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            } => {
                let (dx, dk, db) =
                    conv::conv2d_backward(val(*x), val(*kernel), bias.is_some(), geom, g);
                accumulate(grads, *x, dx);
                accumulate(grads, *kernel, dk);
                if let (Some(b), Some(db)) = (bias, db) {
                    accumulate(grads, *b, db.reshape(val(*b).shape()).expect("bias shape"));
                }
            }
            Op::Deconv2x2 { x, kernel } => {
                let (dx, dk) = conv::deconv2x2_backward(val(*x), val(*kernel), g);
                accumulate(grads, *x, dx);
                accumulate(grads, *kernel, dk);
            }
            Op::LongConv { x, kernels, axis } => {
                let (dx, dk) = longconv::long_conv_backward(val(*x), val(*kernels), *axis, g);
                accumulate(grads, *x, dx);
                accumulate(grads, *kernels, dk);
            }
            Op::SliceOuter { cols, rows } => {
                let (dc, dr) = longconv::slice_outer_backward(val(*cols), val(*rows), g);
                accumulate(grads, *cols, dc);
                accumulate(grads, *rows, dr);
            }
            Op::Permute { x, perm } => {
                accumulate(grads, *x, layout::permute(g, layout::inverse_perm(*perm)));
            }
            Op::Concat { xs } => {
                let shapes: Vec<Shape> = xs.iter().map(|&v| val(v).shape()).collect();
                for (v, part) in xs.iter().zip(layout::split_channels(g, &shapes)) {
                    accumulate(grads, *v, part);
                }
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                stats,
            } => {
                let (dx, dg, db) = norm::batchnorm_train_backward(stats, val(*gamma).data(), g);
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, vec_tensor(val(*gamma).shape(), dg));
                accumulate(grads, *beta, vec_tensor(val(*beta).shape(), db));
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let (dx, dg, db) =
                    norm::batchnorm_eval_backward(val(*x), val(*gamma).data(), mean, inv_std, g);
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, vec_tensor(val(*gamma).shape(), dg));
                accumulate(grads, *beta, vec_tensor(val(*beta).shape(), db));
            }
            Op::Act { x, kind } => {
                let dx = pointwise::activate_backward(val(*x), &node.value, *kind, g);
                accumulate(grads, *x, dx);
            }
            Op::Upsample2x { x } => {
                accumulate(grads, *x, layout::upsample2x_backward(g, val(*x).shape()));
            }
            Op::Crop { x } => {
                accumulate(grads, *x, layout::crop_backward(g, val(*x).shape()));
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Mul { a, b } => {
                accumulate(grads, *a, zip_with(g, val(*b), |x, y| x * y));
                accumulate(grads, *b, zip_with(g, val(*a), |x, y| x * y));
            }
            Op::AddScalar { x } => accumulate(grads, *x, g.clone()),
            Op::Scale { x, factor } => accumulate(grads, *x, g.map(|v| v * *factor)),
            Op::Sum { x } => {
                let gv = g.data()[0];
                accumulate(grads, *x, Tensor::full(val(*x).shape(), gv));
            }
            Op::Custom { inputs, op } => {
                let vals: Vec<&Tensor<T>> = inputs.iter().map(|&v| val(v)).collect();
                for (v, dg) in inputs.iter().zip(op.backward(&vals, &node.value, g)) {
                    if let Some(dg) = dg {
                        accumulate(grads, *v, dg);
                    }
                }
            }
        }
    }
}

fn vec_tensor<T: Scalar>(shape: Shape, data: Vec<T>) -> Tensor<T> {
    Tensor::from_vec(shape, data).expect("per-channel gradient length")
}

fn zip_with<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("equal shapes")
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    visited: usize,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn get_or_zeros(&self, v: Var, shape: Shape) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    /// Number of recorded ops the reverse pass stepped through.
    pub fn ops_visited(&self) -> usize {
        self.visited
    }
}
