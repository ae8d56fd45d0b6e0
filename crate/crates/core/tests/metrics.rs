mod common;

use num_rational::BigRational;
use proptest::prelude::*;
use rand::Rng;
use rganet::mask::SegMask;
use rganet::metrics::{
    cell_confusions, classic_metrics, confusion, fbeta, mgrid, regulator, Confusion, Mgrid, MgridConfig, Real,
    METRIC_EPSILON,
};

fn mask_strategy(h: usize, w: usize) -> impl Strategy<Value = SegMask> {
    proptest::collection::vec(0u8..3, h * w).prop_map(move |d| SegMask::from_vec(h, w, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn confusion_matches_recount(pred in mask_strategy(16, 16), gt in mask_strategy(16, 16), pos in 0u8..3) {
        let c = confusion(&pred, &gt, pos).unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for r in 0..16 {
            for q in 0..16 {
                let (p, g) = (pred.get(r, q) == pos, gt.get(r, q) == pos);
                if p && g { tp += 1 } else if p { fp += 1 } else if g { fn_ += 1 } else { tn += 1 }
            }
        }
        prop_assert_eq!(c, Confusion { tp, fp, fn_, tn });
        prop_assert_eq!(c.total(), 256);
    }

    #[test]
    fn mgrid_in_unit_interval(pred in mask_strategy(20, 30), gt in mask_strategy(20, 30), cell in 1usize..25) {
        let cfg = MgridConfig::<f64>::defaults().with_cell(cell, cell).unwrap();
        if let Mgrid::Score(v) = mgrid(&pred, &gt, 2, &cfg).unwrap() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn single_cell_equals_global(pred in mask_strategy(13, 17), gt in mask_strategy(13, 17)) {
        let cfg = MgridConfig::<f64>::defaults().with_cell(13, 17).unwrap();
        let c = confusion(&pred, &gt, 2).unwrap();
        let global = regulator(&fbeta(&c, &cfg.beta, &cfg.epsilon), &cfg);
        match mgrid(&pred, &gt, 2, &cfg).unwrap() {
            Mgrid::Score(v) => prop_assert!((v - global).abs() < 1e-15),
            Mgrid::NoEvidence => prop_assert!(!c.is_evidential()),
        }
    }

    #[test]
    fn exact_and_float_mgrid_agree(pred in mask_strategy(12, 18), gt in mask_strategy(12, 18)) {
        let f = MgridConfig::<f64>::defaults().with_cell(5, 7).unwrap();
        let q = MgridConfig::<BigRational>::defaults().with_cell(5, 7).unwrap();
        let a = mgrid(&pred, &gt, 2, &f).unwrap().score();
        let b = mgrid(&pred, &gt, 2, &q).unwrap().score();
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - Real::to_f64(&b)).abs() < 1e-12),
            (None, None) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn regulator_limit_is_b(f_m in 0.05f64..0.95, frac in 0.01f64..0.99) {
        let fm = BigRational::from_float(f_m).unwrap();
        let (lo, hi) = rganet::metrics::regulator_interval(&fm);
        let (lo, hi) = (Real::to_f64(&lo), Real::to_f64(&hi));
        let c_m = lo + (hi - lo) * frac;
        prop_assume!(c_m > lo && c_m < hi);
        let cfg = MgridConfig::new(0.5, 12, 12, f_m, c_m).unwrap();
        prop_assert!(cfg.b > 0.0 && cfg.b < f_m);
        prop_assert!((regulator(&1e-9, &cfg) - cfg.b).abs() < 1e-6);
    }
}

#[test]
fn identical_masks_score_one() {
    let gt = common::random_mask(30, 40, 3, 1);
    let cfg = MgridConfig::<f64>::defaults();
    assert!((mgrid(&gt, &gt, 2, &cfg).unwrap().score().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn edge_cells_are_kept() {
    let m = SegMask::new(25, 13);
    let cells = cell_confusions(&m, &m, 2, 12, 12).unwrap();
    assert_eq!(cells.len(), 3 * 2);
    assert_eq!(cells[5].total(), 1);
}

#[test]
fn regulator_strictly_increasing() {
    let cfg = MgridConfig::<f64>::defaults();
    let vals: Vec<f64> = (1..=1000).map(|i| regulator(&(i as f64 / 1000.0), &cfg)).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn dice_is_fbeta_at_one() {
    let mut r = common::rng(7);
    for _ in 0..1000 {
        let c = Confusion { tp: r.gen_range(0..5000), fp: r.gen_range(0..5000), fn_: r.gen_range(0..5000), tn: r.gen_range(0..5000) };
        assert_eq!(classic_metrics::<f64>(&c).dice, fbeta(&c, &1.0, &METRIC_EPSILON));
    }
}

#[test]
fn everything_positive_is_all_false_positive() {
    let pred = SegMask::from_fn(4, 4, |_, _| 2);
    let gt = SegMask::new(4, 4);
    assert_eq!(confusion(&pred, &gt, 2).unwrap(), Confusion { tp: 0, fp: 16, fn_: 0, tn: 0 });
}

#[test]
fn exact_interval_boundaries() {
    let half = BigRational::from_ratio(1, 2);
    let mk = |c: BigRational| MgridConfig::new(half.clone(), 12, 12, half.clone(), c);
    assert!(mk(BigRational::from_ratio(1, 2)).is_err());
    assert!(mk(BigRational::from_ratio(3, 4)).is_err());
    assert!(mk(BigRational::from_ratio(501, 1000)).is_ok());
    assert!(mk(BigRational::from_ratio(749, 1000)).is_ok());
}
