use indexmap::IndexMap;

use super::norm;
use super::params::{ParamKind, ParamStore};
use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Running statistics, parameters untouched.
    Eval,
}

/// One forward pass: a fresh tape plus the parameter store it reads.
///
/// Parameters are bound to tape leaves on first use, so every layer that asks
/// for the same name shares one leaf and its gradient accumulates there.
pub struct Session<'p, T: Scalar> {
    tape: Tape<T>,
    params: &'p mut ParamStore<T>,
    mode: Mode,
    bound: IndexMap<String, Var>,
}

impl<'p, T: Scalar> Session<'p, T> {
    pub fn new(params: &'p mut ParamStore<T>, mode: Mode) -> Self {
        Session {
            tape: Tape::new(),
            params,
            mode,
            bound: IndexMap::new(),
        }
    }

    /// Shape-and-count-only session, see [`Tape::dry`].
    pub fn dry(params: &'p mut ParamStore<T>, mode: Mode) -> Self {
        Session {
            tape: Tape::dry(),
            ..Self::new(params, mode)
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape<T> {
        &mut self.tape
    }

    pub fn params(&self) -> &ParamStore<T> {
        self.params
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.tape.leaf(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.tape.value(v)
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let entry = self.params.get(name)?;
        if entry.kind != ParamKind::Trainable {
            return Err(Error::Invalid(format!("{name} is a buffer, not a parameter")));
        }
        let v = self.tape.leaf(entry.tensor.clone());
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Var bound to `name` during this pass, if any layer used it.
    pub fn bound(&self, name: &str) -> Option<Var> {
        self.bound.get(name).copied()
    }

    /// Batch normalization with `<prefix>.gamma`, `.beta`, `.running_mean` and
    /// `.running_var`. Training mode folds the batch statistics into the
    /// running ones.
    pub fn batchnorm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gamma = self.param(&format!("{prefix}.gamma"))?;
        let beta = self.param(&format!("{prefix}.beta"))?;
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        match self.mode {
            Mode::Train => {
                let (y, mean, var) = self.tape.batchnorm_train(x, gamma, beta)?;
                if !self.tape.is_dry() {
                    norm::update_running(self.params.get_mut(&mean_name)?.tensor.data_mut(), &mean);
                    norm::update_running(self.params.get_mut(&var_name)?.tensor.data_mut(), &var);
                }
                Ok(y)
            }
            Mode::Eval => {
                let mean = self.params.tensor(&mean_name)?.data().to_vec();
                let var = self.params.tensor(&var_name)?.data().to_vec();
                self.tape.batchnorm_eval(x, gamma, beta, &mean, &var)
            }
        }
    }

    /// Runs `f` with `name` pushed on the tape's scope stack.
    pub fn scoped<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        self.tape.push_scope(name);
        let out = f(self);
        self.tape.pop_scope();
        out
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.tape.backward(loss)
    }

    /// Gradient for every trainable parameter; ones the loss does not reach get zeros.
    pub fn param_grads(&self, grads: &Gradients<T>) -> ParamGrads<T> {
        let mut out = IndexMap::new();
        for (name, entry) in self.params.iter() {
            if entry.kind != ParamKind::Trainable {
                continue;
            }
            let g = match self.bound.get(name) {
                Some(&v) => grads.get_or_zeros(v, entry.tensor.shape()),
                None => Tensor::zeros(entry.tensor.shape()),
            };
            out.insert(name.to_string(), g);
        }
        ParamGrads { grads: out }
    }

    pub fn into_tape(self) -> Tape<T> {
        self.tape
    }
}

/// Gradients keyed by parameter name.
#[derive(Clone, Debug)]
pub struct ParamGrads<T> {
    grads: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(Tensor::is_finite)
    }
}
