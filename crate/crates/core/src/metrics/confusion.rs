use num_traits::Float;

use super::real::Real;
use crate::error::Result;
use crate::mask::SegMask;

/// Denominator guard shared by every ratio metric.
pub const METRIC_EPSILON: f64 = 1e-31;

/// Pixel counts for one class treated as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Any positive in either mask.
    pub fn is_evidential(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    #[inline]
    pub fn record(&mut self, pred_pos: bool, gt_pos: bool) {
        match (pred_pos, gt_pos) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &SegMask, gt: &SegMask, positive: u8) -> Result<Confusion> {
    pred.same_extent(gt, "confusion")?;
    let mut c = Confusion::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        c.record(p == positive, g == positive);
    }
    Ok(c)
}

/// `(1+β²)·tp / (β²·(tp+fn) + tp + fp + ε)`
pub fn fbeta<R: Real>(c: &Confusion, beta: &R, epsilon: &R) -> R {
    let b2 = beta.clone() * beta.clone();
    let tp = R::from_u64(c.tp);
    let num = (R::one() + b2.clone()) * tp.clone();
    let den = b2 * (tp.clone() + R::from_u64(c.fn_)) + tp + R::from_u64(c.fp) + epsilon.clone();
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicMetrics<F> {
    pub accuracy: F,
    pub precision: F,
    pub recall: F,
    pub jaccard: F,
    pub dice: F,
    pub mcc: F,
}

pub fn classic_metrics<F: Float>(c: &Confusion) -> ClassicMetrics<F> {
    let f = |v: u64| F::from(v).expect("count representable");
    let eps = F::from(METRIC_EPSILON).expect("epsilon representable");
    let (tp, fp, fn_, tn) = (f(c.tp), f(c.fp), f(c.fn_), f(c.tn));
    let two = F::one() + F::one();
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    ClassicMetrics {
        accuracy: (tp + tn) / (tp + fp + fn_ + tn + eps),
        precision: tp / (tp + fp + eps),
        recall: tp / (tp + fn_ + eps),
        jaccard: tp / (tp + fp + fn_ + eps),
        // Same evaluation order as fbeta at β = 1, so the two agree bit for bit.
        dice: two * tp / ((tp + fn_) + tp + fp + eps),
        mcc: (tp * tn - fp * fn_) / (mcc_den + eps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fbeta_examples() {
        let eps = METRIC_EPSILON;
        let c = |tp, fp, fn_| Confusion { tp, fp, fn_, tn: 0 };
        assert!((fbeta(&c(10, 0, 0), &0.5, &eps) - 1.0).abs() < 1e-12);
        assert_eq!(fbeta(&c(0, 3, 7), &0.5, &eps), 0.0);
        assert!((fbeta(&c(5, 5, 5), &0.5, &eps) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classic_examples() {
        let perfect = Confusion { tp: 40, fp: 0, fn_: 0, tn: 60 };
        let m = classic_metrics::<f64>(&perfect);
        for v in [m.accuracy, m.precision, m.recall, m.jaccard, m.dice, m.mcc] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let balanced = Confusion { tp: 25, fp: 25, fn_: 25, tn: 25 };
        assert!(classic_metrics::<f64>(&balanced).mcc.abs() < 1e-15);
    }

    #[test]
    fn confusion_counts() {
        let pred = SegMask::from_vec(1, 4, vec![2, 2, 0, 1]).unwrap();
        let gt = SegMask::from_vec(1, 4, vec![2, 0, 2, 1]).unwrap();
        let c = confusion(&pred, &gt, 2).unwrap();
        assert_eq!(c, Confusion { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert!(confusion(&pred, &SegMask::new(2, 2), 2).is_err());
    }
}
