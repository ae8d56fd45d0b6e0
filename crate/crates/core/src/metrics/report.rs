use super::confusion::{classic_metrics, confusion, fbeta, ClassicMetrics};
use super::mgrid::{mgrid, MgridConfig};
use crate::error::Result;
use crate::mask::SegMask;

/// Every metric for one prediction/label pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub classic: ClassicMetrics<f64>,
    pub fbeta: f64,
    /// `None` when no cell is evidential.
    pub mgrid: Option<f64>,
}

/// How images without evidential cells enter the dataset mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmptyPolicy {
    #[default]
    Skip,
    CountAsOne,
}

pub fn evaluate_pair(
    name: &str,
    pred: &SegMask,
    gt: &SegMask,
    positive: u8,
    cfg: &MgridConfig<f64>,
) -> Result<ImageMetrics> {
    let c = confusion(pred, gt, positive)?;
    Ok(ImageMetrics {
        name: name.to_string(),
        classic: classic_metrics(&c),
        fbeta: fbeta(&c, &cfg.beta, &cfg.epsilon),
        mgrid: mgrid(pred, gt, positive, cfg)?.score(),
    })
}

/// Means over images; `mgrid` is `None` when every image lacked evidence
/// under [`EmptyPolicy::Skip`].
pub fn mean_metrics(rows: &[ImageMetrics], empty: EmptyPolicy) -> ImageMetrics {
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&ImageMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mgrids: Vec<f64> = rows
        .iter()
        .filter_map(|r| match (r.mgrid, empty) {
            (Some(v), _) => Some(v),
            (None, EmptyPolicy::CountAsOne) => Some(1.0),
            (None, EmptyPolicy::Skip) => None,
        })
        .collect();
    ImageMetrics {
        name: "mean".into(),
        classic: ClassicMetrics {
            accuracy: mean(&|r| r.classic.accuracy),
            precision: mean(&|r| r.classic.precision),
            recall: mean(&|r| r.classic.recall),
            jaccard: mean(&|r| r.classic.jaccard),
            dice: mean(&|r| r.classic.dice),
            mcc: mean(&|r| r.classic.mcc),
        },
        fbeta: mean(&|r| r.fbeta),
        mgrid: (!mgrids.is_empty()).then(|| mgrids.iter().sum::<f64>() / mgrids.len() as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_policy() {
        let cfg = MgridConfig::defaults();
        let blank = SegMask::new(4, 4);
        let hit = SegMask::from_fn(4, 4, |r, _| if r == 0 { 2 } else { 0 });
        let rows = vec![
            evaluate_pair("a", &blank, &blank, 2, &cfg).unwrap(),
            evaluate_pair("b", &hit, &hit, 2, &cfg).unwrap(),
        ];
        assert_eq!(rows[0].mgrid, None);
        assert!((mean_metrics(&rows, EmptyPolicy::Skip).mgrid.unwrap() - 1.0).abs() < 1e-12);
        assert!((mean_metrics(&rows, EmptyPolicy::CountAsOne).mgrid.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mean_metrics(&rows[..1], EmptyPolicy::Skip).mgrid, None);
    }
}
