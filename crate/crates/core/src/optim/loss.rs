//! Class-weighted focal and cross-entropy losses over probability maps,
//! averaged over pixels.

use crate::engine::{CustomOp, Shape, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::mask::SegMask;
use crate::scalar::Scalar;

/// Lower clamp on probabilities inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossKind {
    #[default]
    Focal,
    Ce,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Focusing exponent; ignored by cross-entropy.
    pub gamma: f64,
    /// Per-class weights, non-negative and summing to one.
    pub alphas: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Focal,
            gamma: 1.3,
            alphas: vec![0.25, 0.25, 0.5],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("loss alphas are empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(Error::Config(format!("loss alpha {a} is negative or not finite")));
        }
        let sum: f64 = self.alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("loss alphas sum to {sum}, expected 1")));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("focal gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    fn gamma_eff(&self) -> f64 {
        match self.kind {
            LossKind::Focal => self.gamma,
            LossKind::Ce => 0.0,
        }
    }
}

fn check_targets(probs: Shape, targets: &[SegMask], cfg: &LossConfig) -> Result<()> {
    if targets.len() != probs.n {
        return Err(Error::shape("loss", format!("{} masks for batch of {}", targets.len(), probs.n)));
    }
    if cfg.alphas.len() != probs.c {
        return Err(Error::Config(format!(
            "{} loss alphas for {} classes",
            cfg.alphas.len(),
            probs.c
        )));
    }
    for m in targets {
        if m.extent() != (probs.h, probs.w) {
            return Err(Error::shape(
                "loss",
                format!("mask {}x{} for probabilities {probs}", m.height(), m.width()),
            ));
        }
        m.check_classes(probs.c)?;
    }
    Ok(())
}

/// `−α·(1−y)^γ·ln(max(y, clamp))` and its derivative in `y`.
fn pixel_term(y: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let clamped = y < LOG_CLAMP;
    let log_y = y.max(LOG_CLAMP).ln();
    let one_minus = 1.0 - y;
    let focus = if gamma == 0.0 { 1.0 } else { one_minus.max(0.0).powf(gamma) };
    let value = -alpha * focus * log_y;
    let d_focus = if gamma == 0.0 || one_minus <= 0.0 {
        0.0
    } else {
        -gamma * one_minus.powf(gamma - 1.0)
    };
    let d_log = if clamped { 0.0 } else { 1.0 / y };
    (value, -alpha * (d_focus * log_y + focus * d_log))
}

fn evaluate<T: Scalar>(probs: &Tensor<T>, targets: &[SegMask], cfg: &LossConfig) -> (T, Tensor<T>) {
    let s = probs.shape();
    let count = (s.n * s.h * s.w) as f64;
    let gamma = cfg.gamma_eff();
    let mut total = 0.0;
    let mut grad = Tensor::zeros(s);
    for (n, mask) in targets.iter().enumerate() {
        for r in 0..s.h {
            for c in 0..s.w {
                let k = mask.get(r, c) as usize;
                let (v, d) = pixel_term(probs.at(n, k, r, c).as_f64(), cfg.alphas[k], gamma);
                total += v;
                *grad.at_mut(n, k, r, c) = T::lit(d / count);
            }
        }
    }
    (T::lit(total / count), grad)
}

/// Loss value without recording anything.
pub fn loss_value<T: Scalar>(probs: &Tensor<T>, targets: &[SegMask], cfg: &LossConfig) -> Result<T> {
    check_targets(probs.shape(), targets, cfg)?;
    Ok(evaluate(probs, targets, cfg).0)
}

pub fn focal_loss<T: Scalar>(probs: &Tensor<T>, targets: &[SegMask], cfg: &LossConfig) -> Result<T> {
    loss_value(probs, targets, &LossConfig { kind: LossKind::Focal, ..cfg.clone() })
}

pub fn ce_loss<T: Scalar>(probs: &Tensor<T>, targets: &[SegMask], cfg: &LossConfig) -> Result<T> {
    loss_value(probs, targets, &LossConfig { kind: LossKind::Ce, ..cfg.clone() })
}

struct PixelLoss<T> {
    /// Gradient with respect to the probabilities, already divided by the pixel count.
    grad: Tensor<T>,
}

impl<T: Scalar> CustomOp<T> for PixelLoss<T> {
    fn name(&self) -> &'static str {
        "pixel_loss"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g = grad.data()[0];
        vec![Some(self.grad.map(|v| v * g))]
    }
}

/// Records the configured loss of `probs` against `targets` as a scalar node.
pub fn record_loss<T: Scalar>(tape: &mut Tape<T>, probs: Var, targets: &[SegMask], cfg: &LossConfig) -> Result<Var> {
    let s = tape.shape(probs);
    check_targets(s, targets, cfg)?;
    let (value, grad) = if tape.is_dry() {
        (T::zero(), Tensor::zeros(Shape::scalar()))
    } else {
        evaluate(tape.value(probs), targets, cfg)
    };
    let flops = 8 * (s.n * s.h * s.w) as u64;
    tape.custom(&[probs], Shape::scalar(), flops, Box::new(PixelLoss { grad }), |_| Ok(Tensor::scalar(value)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: [f64; 3], class: u8) -> (Tensor<f64>, Vec<SegMask>) {
        let t = Tensor::from_vec(Shape::new(1, 3, 1, 1), p.to_vec()).unwrap();
        (t, vec![SegMask::from_vec(1, 1, vec![class]).unwrap()])
    }

    #[test]
    fn examples() {
        let cfg = LossConfig::default();
        let (p, m) = single([0.0, 0.0, 1.0], 2);
        assert_eq!(focal_loss(&p, &m, &cfg).unwrap(), 0.0);
        let (p, m) = single([0.25, 0.25, 0.5], 2);
        let want = 0.5 * 0.5f64.powf(1.3) * 2f64.ln();
        assert!((focal_loss(&p, &m, &cfg).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.1408).abs() < 1e-4);
        let third = 1.0 / 3.0;
        let (p, m) = single([third, third, third], 2);
        assert!((ce_loss(&p, &m, &cfg).unwrap() - 0.5 * 3f64.ln()).abs() < 1e-12);
        let (p, m) = single([0.0, 0.0, 1.0], 2);
        assert!(ce_loss(&p, &m, &cfg).unwrap() <= 1e-11);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig { alphas: vec![0.3, 0.3, 0.3], ..Default::default() };
        assert!(bad.validate().is_err());
        let neg = LossConfig { alphas: vec![-0.5, 0.5, 1.0], ..Default::default() };
        assert!(neg.validate().is_err());
        let g = LossConfig { gamma: 0.0, ..Default::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn class_out_of_range() {
        let (p, _) = single([0.2, 0.3, 0.5], 0);
        let m = vec![SegMask::from_vec(1, 1, vec![3]).unwrap()];
        assert!(focal_loss(&p, &m, &LossConfig::default()).is_err());
    }

    #[test]
    fn clamped_zero_probability_is_finite() {
        let (p, m) = single([1.0, 0.0, 0.0], 2);
        let mut tape = Tape::new();
        let v = tape.leaf(p);
        let l = record_loss(&mut tape, v, &m, &LossConfig::default()).unwrap();
        assert!(tape.value(l).is_finite());
        let g = tape.backward(l).unwrap();
        assert!(g.get(v).unwrap().is_finite());
    }
}
