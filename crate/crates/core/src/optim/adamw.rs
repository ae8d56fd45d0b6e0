//! AdamW with the AMSGrad running maximum and decoupled weight decay.

use indexmap::IndexMap;

use crate::engine::{ParamGrads, ParamKind, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    v_max: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    moments: IndexMap<String, Moments<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Running maximum of the second moment for `name`, once it has been stepped.
    pub fn v_max(&self, name: &str) -> Option<&[T]> {
        self.moments.get(name).map(|m| m.v_max.as_slice())
    }

    /// One update of every trainable parameter from its gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamGrads<T>) -> Result<()> {
        for (name, g) in grads.iter() {
            let e = params.get(name)?;
            if e.kind != ParamKind::Trainable {
                return Err(Error::Invalid(format!("gradient supplied for buffer {name}")));
            }
            if e.tensor.shape() != g.shape() {
                return Err(Error::shape(
                    "adamw_step",
                    format!("{name}: parameter {} but gradient {}", e.tensor.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr = T::lit(c.lr);
        let decay = T::lit(c.lr * c.weight_decay);
        let eps = T::lit(c.eps);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        for (name, g) in grads.iter() {
            let theta = params.get_mut(name)?.tensor.data_mut();
            let st = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![T::zero(); theta.len()],
                v: vec![T::zero(); theta.len()],
                v_max: vec![T::zero(); theta.len()],
            });
            for i in 0..theta.len() {
                let gi = g.data()[i];
                st.m[i] = b1 * st.m[i] + (T::one() - b1) * gi;
                st.v[i] = b2 * st.v[i] + (T::one() - b2) * gi * gi;
                st.v_max[i] = st.v_max[i].max(st.v[i]);
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v_max[i] / bc2;
                theta[i] = theta[i] - lr * (m_hat / (v_hat.sqrt() + eps)) - decay * theta[i];
            }
        }
        Ok(())
    }
}
